//! The `relloc` command line.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 a `--assert` check
//! failed, 3 internal fault.
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use relloc_core::sim::study::{Regime, UnobservableParams};
use relloc_core::sim::world::RecordOptions;
use relloc_core::sim::ScenarioConfig;

use crate::artifacts::{OutDir, RunManifest};
use crate::config::{load_scenario, to_toml, Preset};
use crate::error::{Error, Result};
use crate::grid::{load_grid, sweep, SweepSummary};
use crate::studies::{
    convergence_trials, error_rows, regime_rows, scenario_runs, unobservable_trials, ConvergenceReport, ConvergenceRow,
    EventRow, PoseRow, RegimeStats, ScenarioReport, UnobservableReport,
};

#[derive(Debug, Parser)]
#[command(
    name = "relloc",
    version,
    about = "Range-based relative localization for robot swarms: studies and scenarios"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convergence study: seeded trials from random initial relative states.
    Converge(ConvergeArgs),
    /// Estimation error in normal flight, formation lock and with a hovering target.
    Unobservable(UnobservableArgs),
    /// Observability determinant, rank and regime flags over a grid.
    #[command(alias = "sweep")]
    Observe(ObserveArgs),
    /// Five-robot formation on estimated relative positions.
    Formation(ScenarioArgs),
    /// Follower trails a scripted leader through a gate.
    Leader(ScenarioArgs),
    /// Print a preset scenario as TOML.
    Preset {
        #[arg(value_enum)]
        name: PresetName,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetName {
    Default,
    Formation,
    Leader,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file (TOML); keys it omits come from the command's preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: Option<u64>,
    /// Output directory; nothing is written outside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Convergence later than this counts as failed, s.
    #[arg(long, default_value_t = 60.0)]
    pub horizon: f64,
    /// Exit 2 unless the mean and fraction thresholds hold.
    #[arg(long)]
    pub assert: bool,
    #[arg(long, default_value_t = 20.0)]
    pub max_mean_time: f64,
    #[arg(long, default_value_t = 0.9)]
    pub min_fraction: f64,
}

#[derive(Debug, Args)]
pub struct UnobservableArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Length of each regime window after convergence, s.
    #[arg(long, default_value_t = 20.0)]
    pub window: f64,
    /// Cap on the start-up warm-up before branching into the regimes, s.
    #[arg(long, default_value_t = 120.0)]
    pub max_warmup: f64,
    /// Exit 2 unless the lock MAE, yaw and x/y ratio checks hold.
    #[arg(long)]
    pub assert: bool,
    /// Formation-lock mean position MAE must stay below this, m.
    #[arg(long, default_value_t = 0.2)]
    pub max_lock_mae: f64,
    /// Hovering-target x/y MAE must stay within this factor of normal flight.
    #[arg(long, default_value_t = 1.5)]
    pub xy_ratio: f64,
}

#[derive(Debug, Args)]
pub struct ObserveArgs {
    /// Grid file (TOML), see the `grid` module docs.
    #[arg(long)]
    pub grid: PathBuf,
    /// Output directory; nothing is written outside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Exit 2 if fewer than this fraction of points are observable.
    #[arg(long)]
    pub min_observable: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of runs; run k uses seed+k and traces come from run 0.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
    /// Final window scored for steady-state error, s.
    #[arg(long, default_value_t = 5.0)]
    pub window: f64,
    /// Also write every ranging exchange.
    #[arg(long)]
    pub events: bool,
    /// Pose and error rows every this many input steps.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub every: u64,
    /// Exit 2 unless the steady-state error (and, for `leader`, the gate) holds.
    #[arg(long)]
    pub assert: bool,
    /// Per-axis steady-state error bound, m [default: 0.2 formation, 0.3 leader].
    #[arg(long)]
    pub max_error: Option<f64>,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Converge(a) => converge(a),
        Command::Unobservable(a) => unobservable(a),
        Command::Observe(a) => observe(a),
        Command::Formation(a) => scenario(a, Preset::Formation),
        Command::Leader(a) => scenario(a, Preset::LeaderFollower),
        Command::Preset { name } => {
            let preset = match name {
                PresetName::Default => Preset::Default,
                PresetName::Formation => Preset::Formation,
                PresetName::Leader => Preset::LeaderFollower,
            };
            print!("{}", to_toml(&preset.config())?);
            Ok(())
        }
    }
}

fn resolve(common: &Common, preset: Preset) -> Result<ScenarioConfig> {
    let mut cfg = load_scenario(common.config.as_deref(), preset)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn start(command: &str, out: &Path, config: Option<&Path>, seed: u64) -> Result<(OutDir, RunManifest, Instant)> {
    Ok((OutDir::create(out)?, RunManifest::new(command, config, seed), Instant::now()))
}

fn finish(out: OutDir, manifest: RunManifest, started: Instant, failures: Vec<String>) -> Result<()> {
    let path = out.finish(manifest, started)?;
    println!("wrote {}", path.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Assertion(failures))
    }
}

fn check(failures: &mut Vec<String>, ok: bool, what: String) {
    if !ok {
        failures.push(what);
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Usage(format!("--{name} must be positive")))
    }
}

fn converge(a: ConvergeArgs) -> Result<()> {
    positive("horizon", a.horizon)?;
    let cfg = resolve(&a.common, Preset::Default)?;
    let (mut out, manifest, started) = start("converge", &a.common.out, a.common.config.as_deref(), cfg.seed)?;
    out.write_bytes("config.resolved.toml", to_toml(&cfg)?.as_bytes())?;

    let trials = convergence_trials(&cfg, a.trials)?;
    out.write_csv("trials.csv", "convergence-trials", trials.iter().map(ConvergenceRow::from))?;
    let (report, s) = ConvergenceReport::new(&trials, a.horizon);
    out.write_toml("summary.toml", &report)?;
    println!(
        "{} trials: mean convergence {:.2} s, median {:.2} s, {:.0}% converged by {} s",
        s.trials,
        s.mean_time,
        s.median_time,
        100.0 * s.fraction_by_horizon,
        a.horizon
    );

    let mut failures = Vec::new();
    if a.assert {
        check(
            &mut failures,
            s.mean_time < a.max_mean_time,
            format!("mean time {:.3} s >= {} s", s.mean_time, a.max_mean_time),
        );
        check(
            &mut failures,
            s.fraction_by_horizon >= a.min_fraction,
            format!("converged fraction {:.3} < {}", s.fraction_by_horizon, a.min_fraction),
        );
    }
    finish(out, manifest, started, failures)
}

fn unobservable(a: UnobservableArgs) -> Result<()> {
    positive("window", a.window)?;
    positive("max-warmup", a.max_warmup)?;
    let cfg = resolve(&a.common, Preset::Default)?;
    let (mut out, manifest, started) = start("unobservable", &a.common.out, a.common.config.as_deref(), cfg.seed)?;
    out.write_bytes("config.resolved.toml", to_toml(&cfg)?.as_bytes())?;

    let params = UnobservableParams { max_warmup: a.max_warmup, window: a.window };
    let trials = unobservable_trials(&cfg, &params, a.trials)?;
    out.write_csv("regimes.csv", "unobservable-regimes", regime_rows(&trials))?;
    let stats = Regime::ALL.map(|r| RegimeStats::collect(&trials, r));
    let report = UnobservableReport {
        trials: trials.len(),
        window: a.window,
        warmup_converged: trials.iter().filter(|t| t.warmup_converged_at.is_some()).count(),
        regime: stats.to_vec(),
    };
    out.write_toml("summary.toml", &report)?;
    for s in &stats {
        println!(
            "{:<18} MAE x {:.3}  y {:.3}  psi {:.3}  position {:.3}",
            s.regime, s.mean_mae[0], s.mean_mae[1], s.mean_mae[2], s.mean_position_mae
        );
    }

    let mut failures = Vec::new();
    if a.assert {
        let [normal, lock, hover] = stats;
        check(
            &mut failures,
            lock.mean_position_mae < a.max_lock_mae,
            format!("formation-lock position MAE {:.3} m >= {}", lock.mean_position_mae, a.max_lock_mae),
        );
        check(
            &mut failures,
            hover.mean_mae[2] > normal.median_mae[2],
            format!(
                "hovering-target psi MAE {:.4} not above normal median {:.4}",
                hover.mean_mae[2], normal.median_mae[2]
            ),
        );
        for (k, axis) in ["x", "y"].iter().enumerate() {
            check(
                &mut failures,
                hover.mean_mae[k] <= a.xy_ratio * normal.mean_mae[k],
                format!(
                    "hovering-target {axis} MAE {:.4} above {}x normal {:.4}",
                    hover.mean_mae[k], a.xy_ratio, normal.mean_mae[k]
                ),
            );
        }
    }
    finish(out, manifest, started, failures)
}

fn observe(a: ObserveArgs) -> Result<()> {
    let grid = load_grid(&a.grid)?;
    let seed = match &grid {
        crate::grid::GridSpec::Random(g) => g.seed,
        crate::grid::GridSpec::FormationLock(g) => g.seed,
        crate::grid::GridSpec::Cartesian(_) => 0,
    };
    let (mut out, manifest, started) = start("observe", &a.out, Some(&a.grid), seed)?;
    let points = sweep(&grid);
    out.write_csv("observability.csv", "observability", points.iter().map(|p| p.row()))?;
    let summary = SweepSummary::new(&points);
    out.write_toml("summary.toml", &summary)?;
    println!(
        "{} points: {:.1}% observable, {:.1}% formation lock, max |det| on lock {:.2e}, max det discrepancy {:.2e}",
        summary.samples,
        100.0 * summary.observable,
        100.0 * summary.formation_lock,
        summary.max_abs_det_formation_lock,
        summary.max_determinant_discrepancy
    );
    let mut failures = Vec::new();
    if let Some(min) = a.min_observable {
        check(
            &mut failures,
            summary.observable >= min,
            format!("observable fraction {:.4} < {min}", summary.observable),
        );
    }
    finish(out, manifest, started, failures)
}

fn scenario(a: ScenarioArgs, preset: Preset) -> Result<()> {
    positive("window", a.window)?;
    let leader = preset == Preset::LeaderFollower;
    let command = if leader { "leader" } else { "formation" };
    let cfg = resolve(&a.common, preset)?;
    let (mut out, manifest, started) = start(command, &a.common.out, a.common.config.as_deref(), cfg.seed)?;
    out.write_bytes("config.resolved.toml", to_toml(&cfg)?.as_bytes())?;

    let record = RecordOptions { events: a.events, poses_every: Some(a.every) };
    let (results, trace) = scenario_runs(&cfg, a.runs, a.window, record)?;
    out.write_csv("poses.csv", "poses", trace.poses.iter().map(PoseRow::from))?;
    out.write_csv("errors.csv", "pair-errors", error_rows(&trace, a.every as usize))?;
    if a.events {
        out.write_csv("events.csv", "ranging-events", trace.events.iter().map(EventRow::from))?;
    }
    let report = ScenarioReport::new(&results, a.window, leader);
    out.write_toml("summary.toml", &report)?;
    println!("{} run(s): worst steady-state axis error {:.3} m", report.runs, report.worst_axis_error);
    if let Some(passed) = report.all_gates_passed {
        println!("gate {}", if passed { "passed" } else { "missed" });
    }

    let mut failures = Vec::new();
    if a.assert {
        let bound = a.max_error.unwrap_or(if leader { 0.3 } else { 0.2 });
        check(
            &mut failures,
            report.worst_axis_error < bound,
            format!("steady-state error {:.3} m >= {bound}", report.worst_axis_error),
        );
        if leader {
            check(&mut failures, report.all_gates_passed == Some(true), "follower missed the gate".into());
        }
    }
    finish(out, manifest, started, failures)
}
