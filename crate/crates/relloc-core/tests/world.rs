use nalgebra::Vector2;
use relloc_core::kinematics::relative_dynamics;
use relloc_core::observability::determinant;
use relloc_core::sim::config::{InputNoise, Phase, UpdateTiming};
use relloc_core::sim::metrics::convergence_time;
use relloc_core::sim::truth::RobotTruth;
use relloc_core::sim::world::RecordOptions;
use relloc_core::sim::{PhaseKind, ScenarioConfig, World};
use relloc_core::{wrap_angle, ChannelModel};

fn short(seed: u64, seconds: f64) -> ScenarioConfig {
    ScenarioConfig { seed, duration: seconds, ..ScenarioConfig::default() }
}

fn error_bits(w: &World) -> Vec<u64> {
    w.trace().errors[0]
        .iter()
        .flat_map(|s| [s.t, s.estimate.x, s.estimate.y, s.estimate.psi, s.truth.x, s.truth.y, s.truth.psi])
        .map(f64::to_bits)
        .collect()
}

#[test]
fn seeded_runs_are_bit_identical() {
    let run = || {
        let mut w = World::new(short(11, 10.0)).unwrap();
        w.set_recording(RecordOptions { events: true, poses_every: Some(10) });
        w.run().unwrap();
        w
    };
    let (a, b) = (run(), run());
    assert_eq!(error_bits(&a), error_bits(&b));
    let ev = |w: &World| {
        w.trace().events.iter().flat_map(|e| [e.t, e.d_raw, e.d_corrected]).map(f64::to_bits).collect::<Vec<_>>()
    };
    assert_eq!(ev(&a), ev(&b));
    assert!(!a.trace().events.is_empty());
    assert_eq!(a.trace().poses.len(), 2 * 100);
}

#[test]
fn seeds_change_the_run() {
    let mut a = World::new(short(1, 2.0)).unwrap();
    let mut b = World::new(short(2, 2.0)).unwrap();
    a.run().unwrap();
    b.run().unwrap();
    assert_ne!(error_bits(&a), error_bits(&b));
}

#[test]
fn cloned_world_continues_identically() {
    let mut a = World::new(short(5, 6.0)).unwrap();
    a.run_for(3.0).unwrap();
    let mut b = a.clone();
    a.run().unwrap();
    b.run().unwrap();
    assert_eq!(error_bits(&a), error_bits(&b));
}

/// Estimates depend on relative geometry only: shifting the whole swarm
/// leaves them unchanged up to rounding.
#[test]
fn estimates_ignore_the_global_frame() {
    let cfg = short(3, 15.0);
    let base = World::new(cfg.clone()).unwrap();
    let moved: Vec<RobotTruth> =
        base.robots().iter().map(|r| RobotTruth::at(r.pos + Vector2::new(40.0, -25.0), r.yaw, r.height)).collect();
    let mut a = base;
    let mut b = World::with_robots(cfg, moved).unwrap();
    a.run().unwrap();
    b.run().unwrap();
    for (sa, sb) in a.trace().errors[0].iter().zip(&b.trace().errors[0]) {
        assert!((sa.estimate.x - sb.estimate.x).abs() < 1e-6, "t={}", sa.t);
        assert!((sa.estimate.y - sb.estimate.y).abs() < 1e-6, "t={}", sa.t);
        assert!(wrap_angle(sa.estimate.psi - sb.estimate.psi).abs() < 1e-6, "t={}", sa.t);
    }
}

#[test]
fn covariances_stay_symmetric_psd_for_100_s() {
    for timing in [UpdateTiming::AtEvent, UpdateTiming::EndOfStep] {
        let mut w =
            World::new(ScenarioConfig { seed: 21, duration: 100.0, timing, ..ScenarioConfig::default() }).unwrap();
        while w.step_index() < w.config().steps() {
            w.step().unwrap();
            for (i, j) in [(0, 1), (1, 0)] {
                let p = w.filter(i, j).ekf.p;
                assert!((p - p.transpose()).abs().max() <= 1e-12 * p.abs().max().max(1.0));
                assert!(p.symmetric_eigenvalues().min() >= -1e-12, "t={} {p}", w.time());
            }
        }
    }
}

#[test]
fn default_run_converges() {
    let mut w = World::new(short(0, 60.0)).unwrap();
    w.run().unwrap();
    let t = convergence_time(&w.trace().errors[0], &w.config().criterion);
    assert!(t.is_some());
    assert!(w.filter(0, 1).ranges_used > 1000);
}

/// With noise off the truth-derived relative state follows the relative
/// dynamics driven by the true inputs.
#[test]
fn truth_obeys_relative_dynamics() {
    let cfg = ScenarioConfig {
        seed: 4,
        input_noise: InputNoise::NONE,
        channel: ChannelModel::noiseless(),
        duration: 20.0,
        ..ScenarioConfig::default()
    };
    let dt = cfg.dt;
    let mut w = World::new(cfg).unwrap();
    w.step().unwrap();
    for _ in 0..1999 {
        let before = w.true_relative(0, 1);
        w.step().unwrap();
        let u = w.true_input(0, 1);
        let after = w.true_relative(0, 1);
        let rate = relative_dynamics(&before, &u);
        let predicted = before.as_vector() + rate * dt;
        let d = after.as_vector() - predicted;
        let residual = Vector2::new(d.x, d.y).norm().max(wrap_angle(d.z).abs());
        assert!(residual < 1e-3, "t={} residual {residual}", w.time());
    }
}

#[test]
fn formation_lock_is_singular_and_bounded() {
    let mut w = World::new(ScenarioConfig { seed: 2, duration: 200.0, ..ScenarioConfig::default() }).unwrap();
    let criterion = w.config().criterion;
    while convergence_time(&w.trace().errors[0], &criterion).is_none() {
        w.run_for(1.0).unwrap();
        assert!(w.time() < 120.0, "warm-up did not converge");
    }
    w.switch_phase(PhaseKind::LockedFlight);
    for _ in 0..2000 {
        w.step().unwrap();
        let (x, u) = (w.true_relative(0, 1), w.true_input(0, 1));
        let (det, closed) = determinant(&x, &u);
        assert!(det.abs() < 1e-9 && closed.abs() < 1e-9, "det {det} at t={}", w.time());
        let e = w.estimate(0, 1).position() - x.position();
        assert!(e.norm() < 0.5, "error {} at t={}", e.norm(), w.time());
    }
}

#[test]
fn phases_switch_on_schedule() {
    let mut cfg = short(0, 3.0);
    cfg.phases.push(Phase { kind: PhaseKind::Hover, start: 1.0 });
    let mut w = World::new(cfg).unwrap();
    w.run_for(0.5).unwrap();
    assert_eq!(w.phase(), PhaseKind::RandomStartup);
    w.run_for(1.0).unwrap();
    assert_eq!(w.phase(), PhaseKind::Hover);
    for r in w.robots() {
        assert_eq!(r.velocity.norm(), 0.0);
    }
}

#[test]
fn rejects_mismatched_robot_list() {
    let cfg = short(0, 1.0);
    assert!(World::with_robots(cfg, vec![RobotTruth::at(Vector2::zeros(), 0.0, 1.0)]).is_err());
}

#[test]
fn startup_maneuver_stays_near_home() {
    for seed in 0..50 {
        let mut w = World::new(short(seed, 60.0)).unwrap();
        let home: Vec<Vector2<f64>> = w.robots().iter().map(|r| r.pos).collect();
        w.set_recording(RecordOptions { events: false, poses_every: Some(1) });
        w.run().unwrap();
        for p in &w.trace().poses {
            let d = (Vector2::new(p.x, p.y) - home[p.robot]).norm();
            assert!(d < 1.5, "seed {seed} robot {} drifted {d} m", p.robot);
        }
    }
}

fn quiet(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        input_noise: InputNoise::NONE,
        channel: ChannelModel::noiseless(),
        tracked: vec![[0, 1], [1, 0]],
        ..short(seed, 65.0)
    }
}

#[test]
fn noiseless_runs_settle_tightly() {
    // What remains is discretization: Euler predict against sub-stepped truth.
    for seed in 0..20 {
        let mut w = World::new(quiet(seed)).unwrap();
        w.run().unwrap();
        let e = w.trace().errors[0].last().unwrap().error();
        assert!(e[0].hypot(e[1]) < 0.1 && e[2].abs() < 0.05, "seed {seed}: {e:?}");
    }
}

#[test]
fn noise_slows_convergence_on_average() {
    let time = |cfg: ScenarioConfig| {
        let mut w = World::new(cfg).unwrap();
        w.run().unwrap();
        convergence_time(&w.trace().errors[0], &w.config().criterion).unwrap_or(65.0)
    };
    let (mut clean, mut noisy) = (0.0, 0.0);
    for seed in 0..20 {
        clean += time(quiet(seed));
        noisy += time(short(seed, 65.0));
    }
    assert!(clean < noisy, "noiseless {clean} vs noisy {noisy}");
}

#[test]
fn swapped_pairs_agree_once_converged() {
    for seed in 0..20 {
        let mut w = World::new(quiet(seed)).unwrap();
        w.run().unwrap();
        let (a, b) = (w.estimate(0, 1), w.estimate(1, 0));
        let predicted = -(relloc_core::kinematics::rotation(a.psi).transpose() * a.position());
        assert!((b.position() - predicted).norm() < 0.05, "seed {seed}");
        assert!(wrap_angle(a.psi + b.psi).abs() < 0.02, "seed {seed}");
    }
}

#[test]
fn follower_holds_station_on_a_hovering_leader() {
    let mut cfg = ScenarioConfig::formation();
    cfg.robots = 2;
    cfg.formation.offsets = vec![[1.0, 0.0]];
    for seed in 0..5 {
        cfg.seed = seed;
        let r = relloc_core::sim::study::run_scenario(&cfg, 5.0).unwrap();
        assert!(r.worst_axis_error() < 0.2, "seed {seed}: {:?}", r.followers);
    }
}
