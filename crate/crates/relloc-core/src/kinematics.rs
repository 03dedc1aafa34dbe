//! Frame transforms and the planar relative motion model.
//!
//! Each robot reports its velocity and yaw rate in its *horizontal* frame: a
//! frame with a vertical z axis whose x axis follows the robot's yaw. The
//! relative state `X_ij = [x_ij, y_ij, psi_ij]` places robot `j` in the
//! horizontal frame of robot `i` and evolves as
//!
//! ```text
//! d/dt p_ij   = R(psi_ij) v_j - v_i - S r_i p_ij
//! d/dt psi_ij = r_j - r_i
//! ```
//!
//! with `R` the planar rotation and `S` the quarter-turn skew matrix.
use core::f64::consts::FRAC_PI_2;
use core::fmt;

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use num_traits::Float;

use crate::angle::wrap_angle;

/// The skew-symmetric matrix `[[0, -1], [1, 0]]`.
pub const SKEW: Matrix2<f64> = Matrix2::new(0.0, -1.0, 1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KinematicsError {
    NonFinite,
    /// Pitch or roll at or beyond ±π/2; the yaw-rate transform divides by `cos(roll)`.
    AttitudeOutOfRange {
        pitch: f64,
        roll: f64,
    },
}

impl fmt::Display for KinematicsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFinite => f.write_str("non-finite kinematic input"),
            Self::AttitudeOutOfRange { pitch, roll } => {
                write!(f, "attitude out of range: pitch={pitch} rad, roll={roll} rad")
            }
        }
    }
}

impl core::error::Error for KinematicsError {}

/// Pitch and roll of one robot, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Attitude {
    pub pitch: f64,
    pub roll: f64,
}

impl Attitude {
    pub const LEVEL: Attitude = Attitude { pitch: 0.0, roll: 0.0 };

    pub fn new(pitch: f64, roll: f64) -> Result<Self, KinematicsError> {
        let att = Attitude { pitch, roll };
        att.validate()?;
        Ok(att)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !self.pitch.is_finite() || !self.roll.is_finite() {
            return Err(KinematicsError::NonFinite);
        }
        if self.pitch.abs() >= FRAC_PI_2 || self.roll.abs() >= FRAC_PI_2 {
            return Err(KinematicsError::AttitudeOutOfRange { pitch: self.pitch, roll: self.roll });
        }
        Ok(())
    }

    /// Body-to-horizontal rotation for the X-Y rotation sequence, `R_x(roll) R_y(pitch)`.
    ///
    /// Its first two rows map a body-frame velocity to the horizontal frame.
    pub fn body_to_horizontal(&self) -> nalgebra::Matrix3<f64> {
        let (st, ct) = Float::sin_cos(self.pitch);
        let (sp, cp) = Float::sin_cos(self.roll);
        nalgebra::Matrix3::new(
            ct,
            0.0,
            st, //
            sp * st,
            cp,
            -ct * sp, //
            -cp * st,
            sp,
            cp * ct,
        )
    }
}

/// Gyroscope roll rate `p` and yaw rate `r` in the body frame, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyRates {
    pub roll_rate: f64,
    pub yaw_rate: f64,
}

/// Planar velocity in a robot's horizontal frame, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HorizontalVelocity {
    pub vx: f64,
    pub vy: f64,
}

impl HorizontalVelocity {
    pub const ZERO: HorizontalVelocity = HorizontalVelocity { vx: 0.0, vy: 0.0 };

    pub const fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.vx, self.vy)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Self { vx: v.x, vy: v.y }
    }

    pub fn norm(&self) -> f64 {
        Float::hypot(self.vx, self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite()
    }
}

/// Position and heading of robot `j` in robot `i`'s horizontal frame.
///
/// `psi` is kept in `(-π, π]`; every constructor and mutation re-wraps it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RelativeState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl RelativeState {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self { x, y, psi: wrap_angle(psi) }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.psi)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.psi.is_finite()
    }

    /// The same relative pose seen from the other robot: `p_ji = -R(psi)^T p_ij`, `psi_ji = -psi`.
    pub fn inverse(&self) -> Self {
        let p = -rotation(self.psi).transpose() * self.position();
        Self::new(p.x, p.y, -self.psi)
    }
}

/// `U_ij = [v_i, r_i, v_j, r_j]`: horizontal velocities and yaw rates of both robots.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InputVector {
    pub v_i: HorizontalVelocity,
    pub r_i: f64,
    pub v_j: HorizontalVelocity,
    pub r_j: f64,
}

impl InputVector {
    pub const ZERO: InputVector =
        InputVector { v_i: HorizontalVelocity::ZERO, r_i: 0.0, v_j: HorizontalVelocity::ZERO, r_j: 0.0 };

    pub fn from_array(u: [f64; 6]) -> Self {
        Self {
            v_i: HorizontalVelocity::new(u[0], u[1]),
            r_i: u[2],
            v_j: HorizontalVelocity::new(u[3], u[4]),
            r_j: u[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.v_i.vx, self.v_i.vy, self.r_i, self.v_j.vx, self.v_j.vy, self.r_j]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|u| u.is_finite())
    }

    /// Inputs of the reversed pair `(j, i)`.
    pub fn swapped(&self) -> Self {
        Self { v_i: self.v_j, r_i: self.r_j, v_j: self.v_i, r_j: self.r_i }
    }
}

/// How the horizontal yaw rate is obtained from the gyroscope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum YawRateMode {
    /// `r = -sin(pitch)/cos(roll) p + cos(pitch)/cos(roll) r_body`.
    #[default]
    Full,
    /// Use the body yaw rate as is; adequate for small attitudes.
    Passthrough,
}

/// Projects a body-frame velocity onto the horizontal frame.
pub fn body_to_horizontal_velocity(v_body: Vector3<f64>, att: Attitude) -> Result<HorizontalVelocity, KinematicsError> {
    if !v_body.iter().all(|v| v.is_finite()) {
        return Err(KinematicsError::NonFinite);
    }
    att.validate()?;
    let (st, ct) = Float::sin_cos(att.pitch);
    let (sp, cp) = Float::sin_cos(att.roll);
    #[rustfmt::skip]
    let m = Matrix2x3::new(
        ct,      0.0, st,
        sp * st, cp,  -ct * sp,
    );
    Ok(HorizontalVelocity::from_vector(m * v_body))
}

/// Horizontal-frame yaw rate from body rates.
///
/// The full transform as used here has no body pitch-rate term, unlike the
/// textbook Euler-rate relation (`psi_dot = (q sin(roll) + r cos(roll)) / cos(pitch)`).
/// It is kept in this form deliberately; at small attitudes both agree with
/// [`YawRateMode::Passthrough`].
pub fn body_to_horizontal_yaw_rate(rates: BodyRates, att: Attitude, mode: YawRateMode) -> Result<f64, KinematicsError> {
    if !rates.roll_rate.is_finite() || !rates.yaw_rate.is_finite() {
        return Err(KinematicsError::NonFinite);
    }
    att.validate()?;
    Ok(match mode {
        YawRateMode::Passthrough => rates.yaw_rate,
        YawRateMode::Full => {
            let (st, ct) = Float::sin_cos(att.pitch);
            let cp = Float::cos(att.roll);
            -st / cp * rates.roll_rate + ct / cp * rates.yaw_rate
        }
    })
}

pub fn rotation(psi: f64) -> Matrix2<f64> {
    let (s, c) = Float::sin_cos(psi);
    Matrix2::new(c, -s, s, c)
}

/// Continuous relative dynamics `(x_dot, y_dot, psi_dot)`.
pub fn relative_dynamics(x: &RelativeState, u: &InputVector) -> Vector3<f64> {
    let p = x.position();
    let pdot = rotation(x.psi) * u.v_j.as_vector() - u.v_i.as_vector() - SKEW * p * u.r_i;
    Vector3::new(pdot.x, pdot.y, u.r_j - u.r_i)
}

/// One forward-Euler step of [`relative_dynamics`].
pub fn integrate_step(x: &RelativeState, u: &InputVector, dt: f64) -> RelativeState {
    debug_assert!(dt > 0.0);
    let next = x.as_vector() + relative_dynamics(x, u) * dt;
    RelativeState::from_vector(next)
}
