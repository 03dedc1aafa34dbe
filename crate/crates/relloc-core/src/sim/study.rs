//! Seeded Monte Carlo trials and scenario runs built on [`World`].
//!
//! Everything here is serial; the std crate fans trials out across threads.
use alloc::vec::Vec;

use nalgebra::Vector2;
use num_traits::Float;

use super::config::{OffsetFrame, PhaseKind, ScenarioConfig};
use super::metrics::{convergence_time, mean_absolute_error, ErrorSample};
use super::truth::relative_state;
use super::world::{RecordOptions, SimError, Trace, World};

/// Decorrelated per-trial seed.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub index: u64,
    pub seed: u64,
    pub convergence_time: Option<f64>,
    /// `(e_x, e_y, e_psi)` at the end of the run.
    pub final_error: [f64; 3],
}

/// Runs the configured scenario with `seed` and measures convergence of the
/// first tracked pair.
pub fn run_convergence_trial(cfg: &ScenarioConfig, index: u64, seed: u64) -> Result<TrialResult, SimError> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let criterion = cfg.criterion;
    let mut world = World::new(cfg)?;
    world.run()?;
    let samples = &world.trace().errors[0];
    Ok(TrialResult {
        index,
        seed,
        convergence_time: convergence_time(samples, &criterion),
        final_error: samples.last().map_or([f64::NAN; 3], ErrorSample::error),
    })
}

pub fn convergence_study(cfg: &ScenarioConfig, trials: u64) -> Result<Vec<TrialResult>, SimError> {
    (0..trials).map(|k| run_convergence_trial(cfg, k, trial_seed(cfg.seed, k))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSummary {
    pub trials: usize,
    pub converged: usize,
    /// Converged by `horizon`, as a fraction of all trials.
    pub fraction_by_horizon: f64,
    /// Mean convergence time; trials that never converge count as `horizon`.
    pub mean_time: f64,
    pub median_time: f64,
    pub max_time: f64,
    pub horizon: f64,
}

impl ConvergenceSummary {
    pub fn from_trials(trials: &[TrialResult], horizon: f64) -> Self {
        let mut times: Vec<f64> =
            trials.iter().map(|t| t.convergence_time.map_or(horizon, |c| c.min(horizon))).collect();
        times.sort_by(f64::total_cmp);
        let n = times.len();
        let converged = trials.iter().filter(|t| t.convergence_time.is_some()).count();
        let by_horizon = trials.iter().filter(|t| t.convergence_time.is_some_and(|c| c <= horizon)).count();
        let nf = n.max(1) as f64;
        Self {
            trials: n,
            converged,
            fraction_by_horizon: by_horizon as f64 / nf,
            mean_time: times.iter().sum::<f64>() / nf,
            median_time: median_sorted(&times),
            max_time: times.last().copied().unwrap_or(f64::NAN),
            horizon,
        }
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

/// Flight regimes compared after convergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Keep flying the random start-up maneuver.
    Normal,
    /// All robots share one velocity and hold yaw.
    FormationLock,
    /// The target hovers.
    TargetStationary,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Normal, Regime::FormationLock, Regime::TargetStationary];

    pub fn phase(self) -> PhaseKind {
        match self {
            Regime::Normal => PhaseKind::RandomStartup,
            Regime::FormationLock => PhaseKind::LockedFlight,
            Regime::TargetStationary => PhaseKind::TargetHover,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Normal => "normal",
            Regime::FormationLock => "formation_lock",
            Regime::TargetStationary => "target_stationary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeResult {
    pub regime: Regime,
    /// Per-axis MAE over the regime window.
    pub mae: [f64; 3],
    /// Mean position error norm over the window.
    pub position_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnobservableTrial {
    pub index: u64,
    pub seed: u64,
    /// Time the warm-up reached convergence, `None` if it never did.
    pub warmup_converged_at: Option<f64>,
    pub regimes: Vec<RegimeResult>,
}

impl UnobservableTrial {
    pub fn regime(&self, regime: Regime) -> Option<&RegimeResult> {
        self.regimes.iter().find(|r| r.regime == regime)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnobservableParams {
    /// Give up on the warm-up after this long.
    pub max_warmup: f64,
    /// Length of each regime window.
    pub window: f64,
}

impl Default for UnobservableParams {
    fn default() -> Self {
        Self { max_warmup: 120.0, window: 20.0 }
    }
}

/// Flies the start-up maneuver until the first tracked pair converges, then
/// branches the same world into each regime.
pub fn run_unobservable_trial(
    cfg: &ScenarioConfig,
    params: &UnobservableParams,
    index: u64,
    seed: u64,
) -> Result<UnobservableTrial, SimError> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    cfg.phases = alloc::vec![super::config::Phase { kind: PhaseKind::RandomStartup, start: 0.0 }];
    let criterion = cfg.criterion;
    let dt = cfg.dt;
    let mut world = World::new(cfg)?;
    let max_steps = Float::round(params.max_warmup / dt) as u64;
    // check once per simulated second
    let check_every = Float::round(1.0 / dt).max(1.0) as u64;
    let mut converged_at = None;
    while world.step_index() < max_steps {
        world.run_until((world.step_index() + check_every).min(max_steps))?;
        if let Some(t) = convergence_time(&world.trace().errors[0], &criterion) {
            converged_at = Some(t);
            break;
        }
    }

    let mut regimes = Vec::with_capacity(Regime::ALL.len());
    for regime in Regime::ALL {
        let mut branch = world.clone();
        let t0 = branch.time();
        branch.switch_phase(regime.phase());
        branch.run_for(params.window)?;
        let samples = &branch.trace().errors[0];
        let mae = mean_absolute_error(samples, t0 + 0.5 * dt, f64::INFINITY).unwrap_or([f64::NAN; 3]);
        let window: Vec<&ErrorSample> = samples.iter().filter(|s| s.t > t0).collect();
        let position_mae =
            window.iter().map(|s| Float::hypot(s.error()[0], s.error()[1])).sum::<f64>() / window.len().max(1) as f64;
        regimes.push(RegimeResult { regime, mae, position_mae });
    }
    Ok(UnobservableTrial { index, seed, warmup_converged_at: converged_at, regimes })
}

pub fn unobservable_study(
    cfg: &ScenarioConfig,
    params: &UnobservableParams,
    trials: u64,
) -> Result<Vec<UnobservableTrial>, SimError> {
    (0..trials).map(|k| run_unobservable_trial(cfg, params, k, trial_seed(cfg.seed, k))).collect()
}

/// Steady-state tracking of the commanded offsets, measured on ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerResult {
    pub robot: usize,
    /// Per-axis mean absolute error of the true relative position against the
    /// commanded one over the final window.
    pub steady_error: [f64; 2],
    /// Largest per-axis absolute error over the final window.
    pub max_error: [f64; 2],
    /// Estimation error of the follower's filter on the anchor at the end.
    pub estimate_error: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub seed: u64,
    pub followers: Vec<FollowerResult>,
    /// Signed lateral offset at the gate for each robot (leader-follower only).
    pub gate_crossings: Vec<Option<f64>>,
    pub gate_width: f64,
}

impl ScenarioResult {
    pub fn worst_axis_error(&self) -> f64 {
        self.followers.iter().flat_map(|f| f.steady_error).fold(0.0, f64::max)
    }

    /// Every follower crossed the gate inside the box.
    pub fn gate_passed(&self) -> bool {
        self.gate_crossings.len() > 1
            && self.gate_crossings[1..].iter().all(|c| c.is_some_and(|l| Float::abs(l) <= 0.5 * self.gate_width))
    }
}

/// Runs a formation or leader-follower configuration and scores the final
/// `window` seconds.
pub fn run_scenario(cfg: &ScenarioConfig, window: f64) -> Result<ScenarioResult, SimError> {
    run_scenario_recorded(cfg, window, RecordOptions::default()).map(|(r, _)| r)
}

/// [`run_scenario`] that also returns the recorded trace.
pub fn run_scenario_recorded(
    cfg: &ScenarioConfig,
    window: f64,
    record: RecordOptions,
) -> Result<(ScenarioResult, Trace), SimError> {
    let mut world = World::new(cfg.clone())?;
    world.set_recording(record);
    let total = cfg.steps();
    let window_steps = Float::round(window / cfg.dt) as u64;
    let start = total.saturating_sub(window_steps);
    world.run_until(start)?;
    let n = cfg.robots;
    let mut sum = alloc::vec![[0.0f64; 2]; n];
    let mut max = alloc::vec![[0.0f64; 2]; n];
    let mut count = 0usize;
    while world.step_index() < total {
        world.step()?;
        let phase = world.phase();
        for r in 1..n {
            let truth = relative_state(&world.robots()[r], &world.robots()[0]);
            let desired = desired_relative(cfg, phase, r, truth.psi);
            let e = truth.position() - desired;
            for axis in 0..2 {
                sum[r][axis] += Float::abs(e[axis]);
                max[r][axis] = f64::max(max[r][axis], Float::abs(e[axis]));
            }
        }
        count += 1;
    }
    let followers = (1..n)
        .map(|r| {
            let est = world.estimate(r, 0);
            let truth = world.true_relative(r, 0);
            FollowerResult {
                robot: r,
                steady_error: sum[r].map(|s| s / count.max(1) as f64),
                max_error: max[r],
                estimate_error: ErrorSample { t: world.time(), truth, estimate: est }.error(),
            }
        })
        .collect();
    let result = ScenarioResult {
        seed: cfg.seed,
        followers,
        gate_crossings: world.leader_track().map(|t| t.crossings.clone()).unwrap_or_default(),
        gate_width: cfg.leader.gate_width,
    };
    Ok((result, world.into_trace()))
}

/// Commanded position of robot 0 in follower `r`'s frame, given the relative
/// yaw `psi` of robot 0 seen from `r`.
pub fn desired_relative(cfg: &ScenarioConfig, phase: PhaseKind, r: usize, psi: f64) -> Vector2<f64> {
    let (offset, frame) = match phase {
        // the leader offset is the follower's place in the leader frame
        PhaseKind::LeaderFollower => (-Vector2::from(cfg.leader.offset), cfg.leader.frame),
        _ => (Vector2::from(cfg.formation.offsets[(r - 1) % cfg.formation.offsets.len()]), cfg.formation.frame),
    };
    match (phase, frame) {
        (_, OffsetFrame::Follower) => offset,
        (PhaseKind::LeaderFollower, OffsetFrame::Anchor) => crate::kinematics::rotation(psi) * offset,
        (_, OffsetFrame::Anchor) => -(crate::kinematics::rotation(psi) * offset),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_seeds_differ() {
        let seeds: Vec<u64> = (0..100).map(|k| trial_seed(7, k)).collect();
        for (a, s) in seeds.iter().enumerate() {
            assert!(seeds[a + 1..].iter().all(|t| t != s));
        }
        assert_ne!(trial_seed(7, 0), trial_seed(8, 0));
    }

    #[test]
    fn summary_counts_unconverged_at_horizon() {
        let mk = |c| TrialResult { index: 0, seed: 0, convergence_time: c, final_error: [0.0; 3] };
        let s = ConvergenceSummary::from_trials(&[mk(Some(10.0)), mk(Some(20.0)), mk(None), mk(Some(70.0))], 60.0);
        assert_eq!(s.converged, 3);
        assert_eq!(s.fraction_by_horizon, 0.5);
        assert!((s.mean_time - (10.0 + 20.0 + 60.0 + 60.0) / 4.0).abs() < 1e-12);
        assert_eq!(s.median_time, 40.0);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
