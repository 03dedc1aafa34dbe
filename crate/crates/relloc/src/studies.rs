//! Trials fanned out over threads, plus the report rows written for them.
//!
//! Each trial owns its seeded world, and the indexed parallel collect keeps
//! results in trial order, so the output does not depend on the thread count.
use rayon::prelude::*;
use relloc_core::sim::metrics::ErrorSample;
use relloc_core::sim::study::{
    median, run_convergence_trial, run_scenario_recorded, run_unobservable_trial, trial_seed, ConvergenceSummary,
    Regime, ScenarioResult, TrialResult, UnobservableParams, UnobservableTrial,
};
use relloc_core::sim::world::{EventRecord, PoseRecord, RecordOptions, Trace};
use relloc_core::sim::{ScenarioConfig, SimError};
use serde::Serialize;

pub fn convergence_trials(cfg: &ScenarioConfig, trials: u64) -> Result<Vec<TrialResult>, SimError> {
    (0..trials).into_par_iter().map(|k| run_convergence_trial(cfg, k, trial_seed(cfg.seed, k))).collect()
}

pub fn unobservable_trials(
    cfg: &ScenarioConfig,
    params: &UnobservableParams,
    trials: u64,
) -> Result<Vec<UnobservableTrial>, SimError> {
    (0..trials).into_par_iter().map(|k| run_unobservable_trial(cfg, params, k, trial_seed(cfg.seed, k))).collect()
}

/// Runs `runs` copies of a scenario with seeds `seed, seed + 1, ...`; only the
/// first keeps its trace.
pub fn scenario_runs(
    cfg: &ScenarioConfig,
    runs: u64,
    window: f64,
    record: RecordOptions,
) -> Result<(Vec<ScenarioResult>, Trace), SimError> {
    let out: Vec<(ScenarioResult, Option<Trace>)> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let cfg = ScenarioConfig { seed: cfg.seed.wrapping_add(k), ..cfg.clone() };
            let rec = if k == 0 { record } else { RecordOptions::default() };
            run_scenario_recorded(&cfg, window, rec).map(|(r, t)| (r, (k == 0).then_some(t)))
        })
        .collect::<Result<_, _>>()?;
    let mut trace = Trace::default();
    let results = out
        .into_iter()
        .map(|(r, t)| {
            if let Some(t) = t {
                trace = t;
            }
            r
        })
        .collect();
    Ok((results, trace))
}

/// Per-axis statistics of one regime over all trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeStats {
    pub regime: &'static str,
    pub trials: usize,
    /// Mean over trials of the per-axis MAE `[x, y, psi]`.
    pub mean_mae: [f64; 3],
    pub median_mae: [f64; 3],
    pub mean_position_mae: f64,
    pub max_position_mae: f64,
}

impl RegimeStats {
    pub fn collect(trials: &[UnobservableTrial], regime: Regime) -> Self {
        let rows: Vec<_> = trials.iter().filter_map(|t| t.regime(regime)).collect();
        let n = rows.len().max(1) as f64;
        let axis = |k: usize| rows.iter().map(|r| r.mae[k]).collect::<Vec<_>>();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        let pos: Vec<f64> = rows.iter().map(|r| r.position_mae).collect();
        Self {
            regime: regime.name(),
            trials: rows.len(),
            mean_mae: [0, 1, 2].map(|k| mean(&axis(k))),
            median_mae: [0, 1, 2].map(|k| median(&axis(k))),
            mean_position_mae: mean(&pos),
            max_position_mae: pos.iter().copied().fold(f64::NAN, f64::max),
        }
    }
}

// ---- report rows ----

#[derive(Debug, Serialize)]
pub struct ConvergenceRow {
    pub trial: u64,
    pub seed: u64,
    pub converged: bool,
    /// Empty when the trial never converged.
    pub convergence_time: Option<f64>,
    pub final_ex: f64,
    pub final_ey: f64,
    pub final_epsi: f64,
}

impl From<&TrialResult> for ConvergenceRow {
    fn from(t: &TrialResult) -> Self {
        Self {
            trial: t.index,
            seed: t.seed,
            converged: t.convergence_time.is_some(),
            convergence_time: t.convergence_time,
            final_ex: t.final_error[0],
            final_ey: t.final_error[1],
            final_epsi: t.final_error[2],
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ConvergenceReport {
    pub trials: usize,
    pub converged: usize,
    pub horizon: f64,
    pub fraction_by_horizon: f64,
    /// Never-converged trials count as `horizon`.
    pub mean_time: f64,
    pub median_time: f64,
    pub max_time: f64,
    pub trial: Vec<ConvergenceTrialEntry>,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceTrialEntry {
    pub index: u64,
    pub seed: String,
    pub convergence_time: Option<f64>,
    pub final_error: [f64; 3],
}

impl ConvergenceReport {
    pub fn new(trials: &[TrialResult], horizon: f64) -> (Self, ConvergenceSummary) {
        let s = ConvergenceSummary::from_trials(trials, horizon);
        let report = Self {
            trials: s.trials,
            converged: s.converged,
            horizon,
            fraction_by_horizon: s.fraction_by_horizon,
            mean_time: s.mean_time,
            median_time: s.median_time,
            max_time: s.max_time,
            trial: trials
                .iter()
                .map(|t| ConvergenceTrialEntry {
                    index: t.index,
                    seed: t.seed.to_string(),
                    convergence_time: t.convergence_time,
                    final_error: t.final_error,
                })
                .collect(),
        };
        (report, s)
    }
}

#[derive(Debug, Serialize)]
pub struct RegimeRow {
    pub trial: u64,
    pub seed: u64,
    pub warmup_converged_at: Option<f64>,
    pub regime: &'static str,
    pub mae_x: f64,
    pub mae_y: f64,
    pub mae_psi: f64,
    pub position_mae: f64,
}

pub fn regime_rows(trials: &[UnobservableTrial]) -> Vec<RegimeRow> {
    trials
        .iter()
        .flat_map(|t| {
            t.regimes.iter().map(move |r| RegimeRow {
                trial: t.index,
                seed: t.seed,
                warmup_converged_at: t.warmup_converged_at,
                regime: r.regime.name(),
                mae_x: r.mae[0],
                mae_y: r.mae[1],
                mae_psi: r.mae[2],
                position_mae: r.position_mae,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct UnobservableReport {
    pub trials: usize,
    pub window: f64,
    pub warmup_converged: usize,
    pub regime: Vec<RegimeStats>,
}

#[derive(Debug, Serialize)]
pub struct ErrorRow {
    pub t: f64,
    pub observer: usize,
    pub target: usize,
    pub x_true: f64,
    pub y_true: f64,
    pub psi_true: f64,
    pub x_est: f64,
    pub y_est: f64,
    pub psi_est: f64,
}

/// Error series of every tracked pair, every `every` steps.
pub fn error_rows(trace: &Trace, every: usize) -> Vec<ErrorRow> {
    let every = every.max(1);
    let mut rows = Vec::new();
    for (&(observer, target), series) in trace.pairs.iter().zip(&trace.errors) {
        rows.extend(series.iter().step_by(every).map(|s: &ErrorSample| ErrorRow {
            t: s.t,
            observer,
            target,
            x_true: s.truth.x,
            y_true: s.truth.y,
            psi_true: s.truth.psi,
            x_est: s.estimate.x,
            y_est: s.estimate.y,
            psi_est: s.estimate.psi,
        }));
    }
    rows
}

#[derive(Debug, Serialize)]
pub struct PoseRow {
    pub t: f64,
    pub robot: usize,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub height: f64,
}

impl From<&PoseRecord> for PoseRow {
    fn from(p: &PoseRecord) -> Self {
        Self { t: p.t, robot: p.robot, x: p.x, y: p.y, yaw: p.yaw, height: p.height }
    }
}

#[derive(Debug, Serialize)]
pub struct EventRow {
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub d_true: f64,
    pub d_raw: f64,
    pub d_filtered: f64,
    pub d_corrected: f64,
    pub outlier: bool,
    pub dropped: bool,
}

impl From<&EventRecord> for EventRow {
    fn from(e: &EventRecord) -> Self {
        Self {
            t: e.t,
            i: e.i,
            j: e.j,
            d_true: e.d_true,
            d_raw: e.d_raw,
            d_filtered: e.d_filtered,
            d_corrected: e.d_corrected,
            outlier: e.outlier,
            dropped: e.dropped,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ScenarioReport {
    pub runs: usize,
    pub window: f64,
    pub worst_axis_error: f64,
    pub all_gates_passed: Option<bool>,
    pub run: Vec<RunEntry>,
}

#[derive(Debug, Serialize)]
pub struct RunEntry {
    pub seed: String,
    pub worst_axis_error: f64,
    pub gate_passed: Option<bool>,
    /// Lateral offset of each robot at the gate; robots that never crossed
    /// are left out.
    pub gate_lateral: Vec<f64>,
    pub follower: Vec<FollowerEntry>,
}

#[derive(Debug, Serialize)]
pub struct FollowerEntry {
    pub robot: usize,
    pub steady_error: [f64; 2],
    pub max_error: [f64; 2],
    pub estimate_error: [f64; 3],
}

impl ScenarioReport {
    pub fn new(results: &[ScenarioResult], window: f64, leader: bool) -> Self {
        let run: Vec<RunEntry> = results
            .iter()
            .map(|r| RunEntry {
                seed: r.seed.to_string(),
                worst_axis_error: r.worst_axis_error(),
                gate_passed: leader.then(|| r.gate_passed()),
                gate_lateral: r.gate_crossings.iter().flatten().copied().collect(),
                follower: r
                    .followers
                    .iter()
                    .map(|f| FollowerEntry {
                        robot: f.robot,
                        steady_error: f.steady_error,
                        max_error: f.max_error,
                        estimate_error: f.estimate_error,
                    })
                    .collect(),
            })
            .collect();
        Self {
            runs: results.len(),
            window,
            worst_axis_error: results.iter().map(ScenarioResult::worst_axis_error).fold(0.0, f64::max),
            all_gates_passed: leader.then(|| results.iter().all(ScenarioResult::gate_passed)),
            run,
        }
    }
}
