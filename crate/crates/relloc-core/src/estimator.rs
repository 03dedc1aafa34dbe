//! Per-pair extended Kalman filter over the relative state.
//!
//! Prediction integrates the relative model with forward Euler and propagates
//! the covariance with the discrete Jacobians `A = dF/dX` and `B = dF/dU`,
//! where `F(X, U) = X + f(X, U) dt`. Both Jacobians are exact derivatives of
//! the Euler step, so `B` carries the `dt` factor.
//!
//! The only measurement is the UWB range `sqrt(x^2 + y^2 + (h_j - h_i)^2)`.
//! Heights come straight from the peers and never enter the state.
use core::fmt;

use nalgebra::{Matrix3, Matrix6, RowVector3, SMatrix, Vector3, Vector6};
use num_traits::Float;

use crate::kinematics::{integrate_step, InputVector, RelativeState};

pub type Matrix3x6 = SMatrix<f64, 3, 6>;

/// Below this predicted range the observation Jacobian is not trusted.
pub const MIN_PREDICTED_RANGE: f64 = 1e-6;
/// Eigenvalue floor applied when conditioning the covariance.
pub const EIGEN_FLOOR: f64 = 1e-12;
/// Innovations beyond this many standard deviations are rejected.
pub const DEFAULT_GATE_SIGMAS: f64 = 6.0;
/// After this many consecutive gate rejections the next range is applied
/// anyway. Isolated outliers never form such a run; a diverged filter does.
pub const DEFAULT_GATE_RECOVERY: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorError {
    /// Prediction or update produced a non-finite state or covariance.
    NonFinite {
        x: RelativeState,
        p_diag: [f64; 3],
    },
    /// `H P H^T + R` was not strictly positive.
    InnovationCovariance(f64),
    /// Predicted range below [`MIN_PREDICTED_RANGE`].
    DegenerateGeometry(f64),
    InvalidObservation,
    /// Initial covariance not symmetric positive semidefinite.
    NotPsd,
    InvalidNoise,
    InvalidTimeStep(f64),
}

impl fmt::Display for EstimatorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFinite { x, p_diag: [a, b, c] } => {
                write!(f, "non-finite filter state x=({}, {}, {}) diag(P)=({a}, {b}, {c})", x.x, x.y, x.psi)
            }
            Self::InnovationCovariance(s) => write!(f, "innovation covariance {s} is not positive"),
            Self::DegenerateGeometry(z) => write!(f, "predicted range {z} m too small for linearization"),
            Self::InvalidObservation => f.write_str("range observation must be finite and non-negative"),
            Self::NotPsd => f.write_str("initial covariance is not symmetric positive semidefinite"),
            Self::InvalidNoise => f.write_str("noise parameters must be finite and positive"),
            Self::InvalidTimeStep(dt) => write!(f, "time step {dt} s must be positive"),
        }
    }
}

impl core::error::Error for EstimatorError {}

/// Standard deviations that build `Q = diag(q_v², q_v², q_r², q_v², q_v², q_r²)` and `R = r_d²`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NoiseParams {
    /// Velocity input std, m/s.
    pub q_v: f64,
    /// Yaw-rate input std, rad/s.
    pub q_r: f64,
    /// Range std, m.
    pub r_d: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { q_v: 0.25, q_r: 0.4, r_d: 0.1 }
    }
}

impl NoiseParams {
    pub fn input_covariance(&self) -> Matrix6<f64> {
        let (v, r) = (self.q_v * self.q_v, self.q_r * self.q_r);
        Matrix6::from_diagonal(&Vector6::new(v, v, r, v, v, r))
    }

    pub fn range_variance(&self) -> f64 {
        self.r_d * self.r_d
    }
}

/// Default initial covariance `diag(10, 10, 0.1)`.
pub fn default_initial_covariance() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(10.0, 10.0, 0.1))
}

/// One range measurement with the heights needed to project it onto the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeObservation {
    pub distance: f64,
    pub h_i: f64,
    pub h_j: f64,
    pub timestamp: f64,
}

impl RangeObservation {
    fn is_valid(&self) -> bool {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        ok(self.distance) && ok(self.h_i) && ok(self.h_j) && self.timestamp.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// Innovation outside the gate; state untouched.
    Gated,
    /// Predicted range too small; state untouched.
    Degenerate,
}

/// Filter state for one ordered robot pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    pub x: RelativeState,
    pub p: Matrix3<f64>,
    pub q: Matrix6<f64>,
    pub r: f64,
    /// Innovation gate in standard deviations; `f64::INFINITY` disables gating.
    pub gate_sigmas: f64,
    /// Consecutive rejections tolerated before the gate is bypassed once;
    /// `0` never bypasses.
    pub gate_recovery: u32,
    pub gated: u32,
    gated_run: u32,
    pub skipped: u32,
}

impl Default for EkfState {
    fn default() -> Self {
        let noise = NoiseParams::default();
        Self::initialize(default_initial_covariance(), noise.input_covariance(), noise.range_variance())
            .expect("default parameters are valid")
    }
}

impl EkfState {
    /// Zero relative state with the given covariances.
    pub fn initialize(p0: Matrix3<f64>, q: Matrix6<f64>, r: f64) -> Result<Self, EstimatorError> {
        if !p0.iter().all(|v| v.is_finite()) || (p0 - p0.transpose()).abs().max() > 1e-9 {
            return Err(EstimatorError::NotPsd);
        }
        if p0.symmetric_eigenvalues().min() < -1e-9 {
            return Err(EstimatorError::NotPsd);
        }
        let q_ok = q.iter().all(|v| v.is_finite()) && q.diagonal().iter().all(|&v| v > 0.0);
        if !q_ok || !(r.is_finite() && r > 0.0) {
            return Err(EstimatorError::InvalidNoise);
        }
        Ok(Self {
            x: RelativeState::default(),
            p: p0,
            q,
            r,
            gate_sigmas: DEFAULT_GATE_SIGMAS,
            gate_recovery: DEFAULT_GATE_RECOVERY,
            gated: 0,
            gated_run: 0,
            skipped: 0,
        })
    }

    pub fn with_noise(p0: Matrix3<f64>, noise: NoiseParams) -> Result<Self, EstimatorError> {
        if !(noise.q_v > 0.0 && noise.q_r > 0.0 && noise.r_d > 0.0) {
            return Err(EstimatorError::InvalidNoise);
        }
        Self::initialize(p0, noise.input_covariance(), noise.range_variance())
    }

    /// Euler prediction over `dt` with covariance propagation.
    pub fn predict(&mut self, u: &InputVector, dt: f64) -> Result<(), EstimatorError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EstimatorError::InvalidTimeStep(dt));
        }
        let a = jacobian_a(&self.x, u, dt);
        let b = jacobian_b(&self.x, dt);
        let x = integrate_step(&self.x, u, dt);
        let p = condition(a * self.p * a.transpose() + b * self.q * b.transpose());
        if !x.is_finite() || !p.iter().all(|v| v.is_finite()) {
            return Err(EstimatorError::NonFinite { x, p_diag: [p[(0, 0)], p[(1, 1)], p[(2, 2)]] });
        }
        self.x = x;
        self.p = p;
        Ok(())
    }

    /// Range measurement update. The state is left untouched unless the
    /// outcome is [`UpdateOutcome::Applied`].
    pub fn update(&mut self, obs: &RangeObservation) -> Result<UpdateOutcome, EstimatorError> {
        if !obs.is_valid() {
            return Err(EstimatorError::InvalidObservation);
        }
        let h = match jacobian_h(&self.x, obs.h_i, obs.h_j) {
            Ok(h) => h,
            Err(EstimatorError::DegenerateGeometry(_)) => {
                self.skipped += 1;
                return Ok(UpdateOutcome::Degenerate);
            }
            Err(e) => return Err(e),
        };
        let ph = self.p * h.transpose();
        let s = (h * ph)[(0, 0)] + self.r;
        if !(s > 0.0 && s.is_finite()) {
            return Err(EstimatorError::InnovationCovariance(s));
        }
        let innovation = obs.distance - observe_range(&self.x, obs.h_i, obs.h_j);
        let bypass = self.gate_recovery > 0 && self.gated_run >= self.gate_recovery;
        if Float::abs(innovation) > self.gate_sigmas * Float::sqrt(s) && !bypass {
            self.gated += 1;
            self.gated_run += 1;
            return Ok(UpdateOutcome::Gated);
        }
        let k = ph / s;
        let x = RelativeState::from_vector(self.x.as_vector() + k * innovation);
        // P - K (H P); P is exactly symmetric so H P = (P H^T)^T
        let p = condition(self.p - k * ph.transpose());
        if !x.is_finite() || !p.iter().all(|v| v.is_finite()) {
            return Err(EstimatorError::NonFinite { x, p_diag: [p[(0, 0)], p[(1, 1)], p[(2, 2)]] });
        }
        self.x = x;
        self.p = p;
        self.gated_run = 0;
        Ok(UpdateOutcome::Applied)
    }
}

/// `dF/dX` of the Euler step.
pub fn jacobian_a(x: &RelativeState, u: &InputVector, dt: f64) -> Matrix3<f64> {
    let (s, c) = Float::sin_cos(x.psi);
    let (vx, vy) = (u.v_j.vx, u.v_j.vy);
    #[rustfmt::skip]
    let a = Matrix3::new(
        1.0,           u.r_i * dt, (-s * vx - c * vy) * dt,
        -u.r_i * dt,   1.0,        (c * vx - s * vy) * dt,
        0.0,           0.0,        1.0,
    );
    a
}

/// `dF/dU` of the Euler step.
pub fn jacobian_b(x: &RelativeState, dt: f64) -> Matrix3x6 {
    let (s, c) = Float::sin_cos(x.psi);
    #[rustfmt::skip]
    let b = Matrix3x6::new(
        -1.0, 0.0,  x.y,  c,   -s,  0.0,
        0.0,  -1.0, -x.x, s,   c,   0.0,
        0.0,  0.0,  -1.0, 0.0, 0.0, 1.0,
    );
    b * dt
}

pub fn observe_range(x: &RelativeState, h_i: f64, h_j: f64) -> f64 {
    let dh = h_j - h_i;
    Float::sqrt(x.x * x.x + x.y * x.y + dh * dh)
}

pub fn jacobian_h(x: &RelativeState, h_i: f64, h_j: f64) -> Result<RowVector3<f64>, EstimatorError> {
    let z = observe_range(x, h_i, h_j);
    if !(z >= MIN_PREDICTED_RANGE) {
        return Err(EstimatorError::DegenerateGeometry(z));
    }
    Ok(RowVector3::new(x.x / z, x.y / z, 0.0))
}

/// Symmetrizes `p` and lifts eigenvalues below [`EIGEN_FLOOR`].
fn condition(p: Matrix3<f64>) -> Matrix3<f64> {
    let p = (p + p.transpose()) * 0.5;
    let shifted = p - Matrix3::identity() * EIGEN_FLOOR;
    if shifted.cholesky().is_some() || !p.iter().all(|v| v.is_finite()) {
        return p;
    }
    let eig = p.symmetric_eigen();
    let clamped = eig.eigenvalues.map(|l| if l < EIGEN_FLOOR { EIGEN_FLOOR } else { l });
    let q = eig.eigenvectors;
    let p = q * Matrix3::from_diagonal(&clamped) * q.transpose();
    (p + p.transpose()) * 0.5
}
