//! Local weak observability of the relative state.
//!
//! The observability matrix stacks the gradients of the zeroth, first and
//! second Lie derivatives of the observation along the relative dynamics. The
//! analysis uses the quadratic observation `h = p^T p / 2`, which has the same
//! level sets as the range used by the filter and keeps the derivatives
//! polynomial in `p`.
//!
//! With `a = R v_j - v_i`:
//!
//! ```text
//! grad L0 = [ p^T                         , 0                          ]
//! grad L1 = [ a^T                         , p^T R S v_j                ]
//! grad L2 = [ r_i v_i^T S + r_j v_j^T S^T R^T , -2 v_i^T R S v_j - r_j p^T R v_j ]
//! ```
use core::fmt;

use nalgebra::{Matrix3, RowVector3};

use crate::kinematics::{rotation, InputVector, RelativeState, SKEW};

pub const DEFAULT_DET_THRESHOLD: f64 = 1e-6;
/// Singular values below `sigma_max * RANK_TOLERANCE` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Thresholds turning the exact unobservable conditions into practical tests.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RegimeThresholds {
    /// m
    pub baseline: f64,
    /// Peer speed below which it counts as stationary, m/s.
    pub stationary_speed: f64,
    /// Relative velocity bound for formation lock, m/s.
    pub lock_speed: f64,
    /// Yaw-rate bound for formation lock, rad/s.
    pub lock_yaw_rate: f64,
    pub det: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            baseline: 0.05,
            stationary_speed: 0.01,
            lock_speed: 0.01,
            lock_yaw_rate: 0.01,
            det: DEFAULT_DET_THRESHOLD,
        }
    }
}

/// Set of regime flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RegimeFlags(u8);

impl RegimeFlags {
    pub const ZERO_BASELINE: RegimeFlags = RegimeFlags(1);
    pub const TARGET_STATIONARY: RegimeFlags = RegimeFlags(1 << 1);
    pub const FORMATION_LOCK: RegimeFlags = RegimeFlags(1 << 2);
    pub const OBSERVABLE: RegimeFlags = RegimeFlags(1 << 3);

    const NAMES: [(RegimeFlags, &'static str); 4] = [
        (Self::ZERO_BASELINE, "ZeroBaseline"),
        (Self::TARGET_STATIONARY, "TargetStationary"),
        (Self::FORMATION_LOCK, "FormationLock"),
        (Self::OBSERVABLE, "Observable"),
    ];

    pub const fn empty() -> Self {
        RegimeFlags(0)
    }

    pub const fn contains(self, other: RegimeFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: RegimeFlags) {
        self.0 |= other.0;
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn names(self) -> impl Iterator<Item = &'static str> {
        Self::NAMES.into_iter().filter(move |(f, _)| self.contains(*f)).map(|(_, n)| n)
    }

    /// Parses the `|`-separated form produced by `Display`.
    pub fn parse(s: &str) -> Option<Self> {
        let mut flags = RegimeFlags::empty();
        for part in s.split('|').map(str::trim).filter(|p| !p.is_empty()) {
            let (f, _) = Self::NAMES.iter().find(|(_, n)| *n == part)?;
            flags.insert(*f);
        }
        Some(flags)
    }
}

impl core::ops::BitOr for RegimeFlags {
    type Output = Self;
    fn bitor(self, rhs: Self) -> Self {
        RegimeFlags(self.0 | rhs.0)
    }
}

impl fmt::Display for RegimeFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, name) in self.names().enumerate() {
            if k > 0 {
                f.write_str("|")?;
            }
            f.write_str(name)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservabilityReport {
    pub matrix: Matrix3<f64>,
    /// Determinant of `matrix`.
    pub det: f64,
    /// Closed-form expansion of the determinant, kept for cross-checking.
    pub det_closed_form: f64,
    pub rank: usize,
    pub flags: RegimeFlags,
}

impl ObservabilityReport {
    /// `|det - det_closed_form|` relative to `max(|det|, |det_closed_form|, floor)`.
    pub fn determinant_discrepancy(&self, floor: f64) -> f64 {
        let scale = self.det.abs().max(self.det_closed_form.abs()).max(floor);
        (self.det - self.det_closed_form).abs() / scale
    }
}

/// Gradients of `L0 h`, `L1 h`, `L2 h` with respect to `(x, y, psi)`.
pub fn lie_gradients(x: &RelativeState, u: &InputVector) -> [RowVector3<f64>; 3] {
    let p = x.position();
    let r = rotation(x.psi);
    let (vi, vj) = (u.v_i.as_vector(), u.v_j.as_vector());
    let rv = r * vj;
    let rsv = r * SKEW * vj;
    let a = rv - vi;

    let g0 = RowVector3::new(p.x, p.y, 0.0);
    let g1 = RowVector3::new(a.x, a.y, p.dot(&rsv));
    // r_i S^T v_i + r_j R S v_j, as a column
    let d2p = SKEW.transpose() * vi * u.r_i + rsv * u.r_j;
    let d2psi = -2.0 * vi.dot(&rsv) - u.r_j * p.dot(&rv);
    let g2 = RowVector3::new(d2p.x, d2p.y, d2psi);
    [g0, g1, g2]
}

pub fn observability_matrix(x: &RelativeState, u: &InputVector) -> Matrix3<f64> {
    let [g0, g1, g2] = lie_gradients(x, u);
    Matrix3::from_rows(&[g0, g1, g2])
}

/// Determinant through the closed-form expansion along the yaw column:
/// `-(p^T R S v_j) b^T S p + beta a^T S p` with `b`, `beta` the blocks of the
/// second-order gradient.
pub fn determinant_closed_form(x: &RelativeState, u: &InputVector) -> f64 {
    let p = x.position();
    let r = rotation(x.psi);
    let (vi, vj) = (u.v_i.as_vector(), u.v_j.as_vector());
    let sp = SKEW * p;
    let prsv = p.dot(&(r * SKEW * vj));
    // v_i^T S r_i + r_j v_j^T S^T R^T
    let b = (vi.transpose() * SKEW) * u.r_i + (vj.transpose() * SKEW.transpose() * r.transpose()) * u.r_j;
    let rel = vj.transpose() * r.transpose() - vi.transpose();
    let first = -prsv * (b * sp)[(0, 0)];
    let second = -(2.0 * vi.dot(&(r * SKEW * vj)) + p.dot(&(r * vj)) * u.r_j) * (rel * sp)[(0, 0)];
    first + second
}

/// Determinant of the observability matrix and its closed form.
pub fn determinant(x: &RelativeState, u: &InputVector) -> (f64, f64) {
    (observability_matrix(x, u).determinant(), determinant_closed_form(x, u))
}

/// Numerical rank from the singular values.
pub fn rank(m: &Matrix3<f64>) -> usize {
    let sv = m.singular_values();
    let max = sv.max();
    if !(max > 0.0) {
        return 0;
    }
    sv.iter().filter(|&&s| s > max * RANK_TOLERANCE).count()
}

/// Flags the practical unobservable conditions.
///
/// `Observable` is set exactly when `|det| > thresholds.det`; the other flags
/// are independent geometric tests and may coexist with it near their
/// thresholds.
pub fn classify_regime(x: &RelativeState, u: &InputVector, thresholds: &RegimeThresholds) -> RegimeFlags {
    let det = observability_matrix(x, u).determinant();
    classify_with_det(x, u, det, thresholds)
}

fn classify_with_det(x: &RelativeState, u: &InputVector, det: f64, th: &RegimeThresholds) -> RegimeFlags {
    let mut flags = RegimeFlags::empty();
    if x.position().norm() < th.baseline {
        flags.insert(RegimeFlags::ZERO_BASELINE);
    }
    if u.v_j.norm() < th.stationary_speed {
        flags.insert(RegimeFlags::TARGET_STATIONARY);
    }
    let rel = rotation(x.psi) * u.v_j.as_vector() - u.v_i.as_vector();
    if rel.norm() < th.lock_speed && u.r_i.abs() < th.lock_yaw_rate && u.r_j.abs() < th.lock_yaw_rate {
        flags.insert(RegimeFlags::FORMATION_LOCK);
    }
    if det.abs() > th.det {
        flags.insert(RegimeFlags::OBSERVABLE);
    }
    flags
}

pub fn analyze(x: &RelativeState, u: &InputVector, thresholds: &RegimeThresholds) -> ObservabilityReport {
    let matrix = observability_matrix(x, u);
    let det = matrix.determinant();
    ObservabilityReport {
        matrix,
        det,
        det_closed_form: determinant_closed_form(x, u),
        rank: rank(&matrix),
        flags: classify_with_det(x, u, det, thresholds),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{relative_dynamics, HorizontalVelocity};
    use approx::assert_abs_diff_eq;
    use core::f64::consts::PI;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn dyn_vec(x: Vector3<f64>, u: &InputVector) -> Vector3<f64> {
        // unwrapped psi so the finite differences stay smooth
        relative_dynamics(&RelativeState { x: x.x, y: x.y, psi: x.z }, u)
    }

    /// Five-point central difference gradient.
    fn grad(f: &dyn Fn(Vector3<f64>) -> f64, x: Vector3<f64>) -> Vector3<f64> {
        let h = 1e-2;
        let mut g = Vector3::zeros();
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = h;
            g[k] = (-f(x + 2.0 * e) + 8.0 * f(x + e) - 8.0 * f(x - e) + f(x - 2.0 * e)) / (12.0 * h);
        }
        g
    }

    /// Lie-derivative gradients built by numerically chaining `L_{k+1} = grad(L_k) . f`.
    fn numeric_gradients(x: Vector3<f64>, u: &InputVector) -> [Vector3<f64>; 3] {
        let l0 = |x: Vector3<f64>| 0.5 * (x.x * x.x + x.y * x.y);
        let l1 = |x: Vector3<f64>| grad(&l0, x).dot(&dyn_vec(x, u));
        let l2 = |x: Vector3<f64>| grad(&l1, x).dot(&dyn_vec(x, u));
        [grad(&l0, x), grad(&l1, x), grad(&l2, x)]
    }

    fn sample_input() -> InputVector {
        InputVector::from_array([0.3, -0.5, 0.4, 0.7, 0.2, -0.6])
    }

    #[test]
    fn zeroth_gradient_is_position() {
        let x = RelativeState::new(1.3, -0.7, 2.0);
        let [g0, _, _] = lie_gradients(&x, &sample_input());
        assert_eq!(g0, RowVector3::new(1.3, -0.7, 0.0));
    }

    #[test]
    fn first_gradient_vanishes_for_equal_velocities() {
        let v = HorizontalVelocity::new(0.4, -0.3);
        let u = InputVector { v_i: v, v_j: v, r_i: 0.2, r_j: 0.1 };
        let [_, g1, _] = lie_gradients(&RelativeState::new(1.0, 2.0, 0.0), &u);
        assert_eq!(g1[0], 0.0);
        assert_eq!(g1[1], 0.0);
    }

    #[test]
    fn gradients_match_numeric_chain() {
        let x = RelativeState::new(1.2, -0.8, 0.9);
        let u = sample_input();
        let analytic = lie_gradients(&x, &u);
        let numeric = numeric_gradients(x.as_vector(), &u);
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            assert_abs_diff_eq!(a.transpose(), *n, epsilon = 1e-5);
        }
    }

    #[test]
    fn zero_baseline_is_singular() {
        let x = RelativeState::new(0.0, 0.0, 0.4);
        let m = observability_matrix(&x, &sample_input());
        assert_eq!(m.row(0).norm(), 0.0);
        let (det, closed) = determinant(&x, &sample_input());
        assert_eq!(det, 0.0);
        assert_eq!(closed, 0.0);
        assert!(rank(&m) < 3);
    }

    #[test]
    fn generic_configuration_has_full_rank() {
        let x = RelativeState::new(1.5, 2.0, 0.3);
        let report = analyze(&x, &sample_input(), &RegimeThresholds::default());
        assert_eq!(report.rank, 3);
        assert!(report.flags.contains(RegimeFlags::OBSERVABLE));
        assert!(report.determinant_discrepancy(1e-12) < 1e-9);
    }

    #[test]
    fn stationary_target_drops_rank() {
        let x = RelativeState::new(1.5, -2.0, 0.3);
        let u = InputVector { v_j: HorizontalVelocity::ZERO, r_j: 0.3, ..sample_input() };
        let report = analyze(&x, &u, &RegimeThresholds::default());
        assert!(report.rank <= 2);
        assert!(report.flags.contains(RegimeFlags::TARGET_STATIONARY));
        assert!(!report.flags.contains(RegimeFlags::OBSERVABLE));
    }

    #[test]
    fn formation_lock_is_singular() {
        let x = RelativeState::new(1.0, -2.0, 0.7);
        let vj = HorizontalVelocity::new(0.6, -0.2);
        let vi = HorizontalVelocity::from_vector(rotation(x.psi) * vj.as_vector());
        let u = InputVector { v_i: vi, r_i: 0.0, v_j: vj, r_j: 0.0 };
        let (det, closed) = determinant(&x, &u);
        assert!(det.abs() < 1e-12 && closed.abs() < 1e-12);
        let flags = classify_regime(&x, &u, &RegimeThresholds::default());
        assert!(flags.contains(RegimeFlags::FORMATION_LOCK));
        assert!(!flags.contains(RegimeFlags::OBSERVABLE));
    }

    #[test]
    fn static_observer_is_unobservable() {
        // with v_i = 0, rotating p and psi together about the observer keeps
        // the dynamics and every range, whatever the yaw rates
        let x = RelativeState::new(2.0, 1.0, -0.4);
        for (r_i, r_j) in [(0.0, 0.4), (0.3, 0.4), (-0.7, 0.0)] {
            let u = InputVector { v_i: HorizontalVelocity::ZERO, r_i, v_j: HorizontalVelocity::new(0.5, 0.3), r_j };
            let (det, closed) = determinant(&x, &u);
            assert_abs_diff_eq!(det, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(closed, 0.0, epsilon = 1e-12);
            assert!(rank(&observability_matrix(&x, &u)) <= 2);
        }
    }

    #[test]
    fn hover_pair_flags() {
        let x = RelativeState::new(2.0, 0.0, 0.0);
        let flags = classify_regime(&x, &InputVector::ZERO, &RegimeThresholds::default());
        assert!(flags.contains(RegimeFlags::TARGET_STATIONARY));
        assert!(flags.contains(RegimeFlags::FORMATION_LOCK));
        assert!(!flags.contains(RegimeFlags::ZERO_BASELINE));
        let near = RelativeState::new(0.01, 0.02, 0.0);
        assert!(classify_regime(&near, &InputVector::ZERO, &RegimeThresholds::default())
            .contains(RegimeFlags::ZERO_BASELINE));
    }

    #[test]
    fn flags_display_roundtrip() {
        let f = RegimeFlags::TARGET_STATIONARY | RegimeFlags::FORMATION_LOCK;
        let s = alloc::format!("{f}");
        assert_eq!(s, "TargetStationary|FormationLock");
        assert_eq!(RegimeFlags::parse(&s), Some(f));
        assert_eq!(RegimeFlags::parse(""), Some(RegimeFlags::empty()));
        assert_eq!(RegimeFlags::parse("Bogus"), None);
    }

    fn generic() -> impl Strategy<Value = (RelativeState, InputVector)> {
        ((-3.0f64..3.0, -3.0f64..3.0, -PI..PI), proptest::array::uniform6(-1.0f64..1.0))
            .prop_map(|((x, y, p), u)| (RelativeState::new(x, y, p), InputVector::from_array(u)))
    }

    proptest! {
        #[test]
        fn lie_gradients_match_numeric_chain((x, u) in generic()) {
            let analytic = lie_gradients(&x, &u);
            let numeric = numeric_gradients(x.as_vector(), &u);
            for (a, n) in analytic.iter().zip(numeric.iter()) {
                let scale = n.amax().max(1.0);
                prop_assert!((a.transpose() - n).amax() / scale < 1e-5, "{a} vs {n}");
            }
        }

        #[test]
        fn closed_form_agrees_with_matrix((x, u) in generic()) {
            let r = analyze(&x, &u, &RegimeThresholds::default());
            prop_assert!(r.determinant_discrepancy(1e-9) < 1e-6);
        }

        #[test]
        fn rank_three_iff_observable((x, u) in generic()) {
            let r = analyze(&x, &u, &RegimeThresholds::default());
            prop_assert!(r.rank <= 3);
            // skip the narrow band where the absolute determinant test and the
            // relative singular value test can disagree
            if r.det.abs() > 1e-4 || r.rank < 3 {
                prop_assert_eq!(r.rank == 3, r.flags.contains(RegimeFlags::OBSERVABLE));
            }
        }
    }
}
