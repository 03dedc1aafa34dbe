//! Estimation error bookkeeping and convergence detection.
use num_traits::Float;

use crate::angle::wrap_angle;
use crate::kinematics::RelativeState;

/// Converged once position error stays under `position_tol` and yaw error
/// under `yaw_tol` for `hold` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ConvergenceCriterion {
    pub position_tol: f64,
    pub yaw_tol: f64,
    pub hold: f64,
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        Self { position_tol: 0.3, yaw_tol: 0.2, hold: 5.0 }
    }
}

impl ConvergenceCriterion {
    pub fn within(&self, e: &[f64; 3]) -> bool {
        Float::hypot(e[0], e[1]) < self.position_tol && Float::abs(e[2]) < self.yaw_tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    pub truth: RelativeState,
    pub estimate: RelativeState,
}

impl ErrorSample {
    /// `(e_x, e_y, e_psi)`, estimate minus truth, yaw wrapped.
    pub fn error(&self) -> [f64; 3] {
        [self.estimate.x - self.truth.x, self.estimate.y - self.truth.y, wrap_angle(self.estimate.psi - self.truth.psi)]
    }
}

/// Start of the first run of samples that satisfies the criterion for at
/// least `hold` seconds. `None` if no such run exists.
pub fn convergence_time(samples: &[ErrorSample], criterion: &ConvergenceCriterion) -> Option<f64> {
    let mut run_start: Option<f64> = None;
    for s in samples {
        if criterion.within(&s.error()) {
            let start = *run_start.get_or_insert(s.t);
            if s.t - start >= criterion.hold - 1e-9 {
                return Some(start);
            }
        } else {
            run_start = None;
        }
    }
    None
}

/// Per-axis mean absolute error over samples with `t0 <= t <= t1`.
pub fn mean_absolute_error(samples: &[ErrorSample], t0: f64, t1: f64) -> Option<[f64; 3]> {
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for s in samples.iter().filter(|s| s.t >= t0 && s.t <= t1) {
        let e = s.error();
        for k in 0..3 {
            sum[k] += Float::abs(e[k]);
        }
        n += 1;
    }
    (n > 0).then(|| sum.map(|v| v / n as f64))
}
