use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn relloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relloc")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn repo(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel).display().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(file: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(file).unwrap();
    r.records().map(Result::unwrap).collect()
}

#[test]
fn converge_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = relloc(&["converge", "--trials", "1", "--seed", "7", "--out", path(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["trials.csv", "summary.toml", "config.resolved.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let text = fs::read_to_string(a.join("trials.csv")).unwrap();
    assert!(text.starts_with("# relloc-convergence-trials v1\ntrial,seed,converged,"));
    assert_eq!(csv_rows(&a.join("trials.csv")).len(), 1);
}

#[test]
fn manifest_lists_existing_artifacts_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = relloc(&["converge", "--trials", "2", "--seed", "3", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: toml::Table = fs::read_to_string(out.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(m["seed"].as_str(), Some("3"));
    assert_eq!(m["command"].as_str(), Some("converge"));
    assert!(m["runtime_s"].as_float().unwrap() >= 0.0);
    let artifacts = m["artifacts"].as_array().unwrap();
    assert!(artifacts.len() >= 3);
    for a in artifacts {
        assert!(out.join(a.as_str().unwrap()).is_file());
    }
    // the resolved config replays the run
    let replay = dir.path().join("replay");
    let o = relloc(&[
        "converge",
        "--trials",
        "2",
        "--config",
        path(&out.join("config.resolved.toml")),
        "--out",
        path(&replay),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(out.join("trials.csv")).unwrap(), fs::read(replay.join("trials.csv")).unwrap());
    // nothing written next to the output directory
    let names: Vec<PathBuf> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(names.len(), 2, "{names:?}");
}

#[test]
fn impossible_assertion_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = relloc(&["converge", "--trials", "2", "--assert", "--max-mean-time", "0.001", "--out", path(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("mean time"));
    // artifacts are still written
    assert!(out.join("manifest.toml").is_file());
}

#[test]
fn malformed_config_exits_1_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\n\n[channel]\nsigma_d = oops\n").unwrap();
    let o = relloc(&["converge", "--config", path(&cfg), "--out", path(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains(&format!("{}:4:", cfg.display())), "{err}");

    fs::write(&cfg, "[ekf]\ngate_sigma = 3.0\n").unwrap();
    let o = relloc(&["converge", "--config", path(&cfg), "--out", path(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains(":2:"), "{}", stderr(&o));
}

#[test]
fn single_robot_formation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("one.toml");
    fs::write(&cfg, "robots = 1\n").unwrap();
    let o = relloc(&["formation", "--config", path(&cfg), "--out", path(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains(":1:1: invalid `robots`"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(code(&relloc(&["converge"])), 1); // --out missing
    assert_eq!(code(&relloc(&["converge", "--out", "x", "--trials", "0"])), 1);
    assert_eq!(code(&relloc(&["frobnicate"])), 1);
    assert_eq!(code(&relloc(&["--help"])), 0);
    assert_eq!(code(&relloc(&["--version"])), 0);
    assert_eq!(code(&relloc(&["converge", "--help"])), 0);
    let dir = tempfile::tempdir().unwrap();
    let o = relloc(&["observe", "--grid", path(&dir.path().join("missing.toml")), "--out", path(dir.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unwritable_output_is_an_internal_fault() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("file");
    fs::write(&file, "").unwrap();
    let o = relloc(&["converge", "--trials", "1", "--out", path(&file)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn formation_lock_grid_flags_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = relloc(&["sweep", "--grid", &repo("configs/grids/formation_lock.toml"), "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&out.join("observability.csv"));
    assert_eq!(rows.len(), 1000);
    for r in &rows {
        assert!(r[12].split('|').any(|f| f == "FormationLock"), "{r:?}");
        assert!(!r[12].contains("Observable"));
        assert!(r[9].parse::<f64>().unwrap().abs() < 1e-9);
    }
}

#[test]
fn random_grid_is_mostly_observable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let grid = repo("configs/grids/random.toml");
    let o = relloc(&["observe", "--grid", &grid, "--out", path(&out), "--min-observable", "0.95"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&out.join("observability.csv"));
    let observable = rows.iter().filter(|r| r[12].contains("Observable")).count();
    assert!(observable as f64 / rows.len() as f64 > 0.95);
    let o = relloc(&["observe", "--grid", &grid, "--out", path(&out), "--min-observable", "1.01"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn single_point_grid() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("g.toml");
    // target moving along +x with aligned frames, seen from 3-4-5
    fs::write(&grid, "kind = \"cartesian\"\nx = [3.0]\ny = [4.0]\nvjx = [1.0]\n").unwrap();
    let out = dir.path().join("o");
    let o = relloc(&["observe", "--grid", path(&grid), "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&out.join("observability.csv"));
    assert_eq!(rows.len(), 1);
    // static observer: rank-deficient, see the observability module
    assert_eq!(&rows[0][11], "2");
    assert_eq!(&rows[0][12], "");
}

#[test]
fn formation_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    let o = relloc(&["formation", "--out", path(&out), "--events", "--every", "50", "--assert"]);
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let poses = csv_rows(&out.join("poses.csv"));
    // 85 s at 100 Hz, every 50th step, five robots
    assert_eq!(poses.len(), 170 * 5);
    let errors = csv_rows(&out.join("errors.csv"));
    assert_eq!(errors.len(), 170 * 4);
    assert!(!csv_rows(&out.join("events.csv")).is_empty());
    let summary: toml::Table = fs::read_to_string(out.join("summary.toml")).unwrap().parse().unwrap();
    assert!(summary["worst_axis_error"].as_float().unwrap() < 0.2);
    assert!(summary.get("all_gates_passed").is_none());
}

#[test]
fn leader_passes_the_gate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l");
    let o =
        relloc(&["leader", "--config", &repo("configs/leader.toml"), "--out", path(&out), "--runs", "2", "--assert"]);
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let summary: toml::Table = fs::read_to_string(out.join("summary.toml")).unwrap().parse().unwrap();
    assert_eq!(summary["all_gates_passed"].as_bool(), Some(true));
    assert_eq!(summary["run"].as_array().unwrap().len(), 2);
    assert!(!out.join("events.csv").exists());
}

#[test]
fn example_configs_match_the_presets() {
    use relloc::config::{load_scenario, Preset};
    use relloc_core::sim::ScenarioConfig;
    let load = |name: &str, preset| load_scenario(Some(Path::new(&repo(name))), preset).unwrap();
    assert_eq!(load("configs/converge.toml", Preset::Default), ScenarioConfig::default());
    assert_eq!(load("configs/formation.toml", Preset::Formation), ScenarioConfig::formation());
    assert_eq!(load("configs/leader.toml", Preset::LeaderFollower), ScenarioConfig::leader_follower());
    let uwb = load("configs/uwb_channel.toml", Preset::Default);
    assert_eq!(uwb.channel, relloc_core::ChannelModel::default());
    for g in ["random", "formation_lock", "cartesian"] {
        relloc::grid::load_grid(Path::new(&repo(&format!("configs/grids/{g}.toml")))).unwrap();
    }
}
