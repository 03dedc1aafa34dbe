//! Deterministic world stepper.
//!
//! Each input period the world
//!
//! 1. computes commands for the active phase (controllers read estimates only),
//! 2. applies them to the ground truth and samples every robot's noisy
//!    velocity, yaw rate and height,
//! 3. advances the truth in Euler sub-steps while running the ranging slots
//!    that fall inside each sub-step, feeding every exchange through the range
//!    pipeline into both endpoints' pair filters,
//! 4. predicts every pair filter to the end of the period and records errors.
//!
//! Pair filters receive only the observer's own sensed inputs and height, the
//! peer's communicated payload and processed ranges. Global positions stay on
//! the truth side.
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Vector2, Vector3};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::estimator::{EkfState, EstimatorError, RangeObservation};
use crate::kinematics::{
    body_to_horizontal_velocity, body_to_horizontal_yaw_rate, rotation, BodyRates, InputVector, KinematicsError,
    RelativeState, YawRateMode, SKEW,
};
use crate::ranging::{simulate_exchange, Exchange, Payload, RangePipeline, RangingError, Schedule};

use super::config::{ConfigError, OffsetFrame, Phase, PhaseKind, ScenarioConfig, UpdateTiming};
use super::control::Pid;
use super::metrics::ErrorSample;
use super::startup::StartupManeuver;
use super::truth::{relative_state, Command, RobotTruth};

const PLACEMENT_STREAM: u64 = 1;
const MANEUVER_STREAM_BASE: u64 = 100;
const ANCHOR_STREAM: u64 = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Config(ConfigError),
    NonFinite { t: f64, robot: usize, state: RobotTruth },
    Estimator { t: f64, observer: usize, target: usize, source: EstimatorError },
    Kinematics { t: f64, robot: usize, source: KinematicsError },
    Ranging(RangingError),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e}"),
            Self::NonFinite { t, robot, state } => write!(
                f,
                "non-finite ground truth for robot {robot} at t={t:.3} s: pos=({}, {}) yaw={} v=({}, {})",
                state.pos.x, state.pos.y, state.yaw, state.velocity.vx, state.velocity.vy
            ),
            Self::Estimator { t, observer, target, source } => {
                write!(f, "filter {observer}->{target} failed at t={t:.3} s: {source}")
            }
            Self::Kinematics { t, robot, source } => write!(f, "sensing robot {robot} at t={t:.3} s: {source}"),
            Self::Ranging(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SimError {}

impl From<ConfigError> for SimError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<RangingError> for SimError {
    fn from(e: RangingError) -> Self {
        Self::Ranging(e)
    }
}

/// One processed exchange as seen by the endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
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

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRecord {
    pub t: f64,
    pub robot: usize,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RecordOptions {
    pub events: bool,
    /// Record every robot's pose every this many steps.
    pub poses_every: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub pairs: Vec<(usize, usize)>,
    /// One error series per tracked pair, sampled every step.
    pub errors: Vec<Vec<ErrorSample>>,
    pub events: Vec<EventRecord>,
    pub poses: Vec<PoseRecord>,
}

impl Trace {
    pub fn errors_for(&self, observer: usize, target: usize) -> Option<&[ErrorSample]> {
        let k = self.pairs.iter().position(|&p| p == (observer, target))?;
        Some(&self.errors[k])
    }
}

/// The EKF robot `observer` runs on robot `target`.
#[derive(Debug, Clone)]
pub struct PairFilter {
    pub observer: usize,
    pub target: usize,
    pub ekf: EkfState,
    pipeline: RangePipeline,
    peer: Payload,
    t: f64,
    pending: Vec<RangeObservation>,
    pub ranges_used: u32,
}

impl PairFilter {
    fn input(&self, own: &Payload) -> InputVector {
        InputVector { v_i: own.v, r_i: own.r, v_j: self.peer.v, r_j: self.peer.r }
    }

    fn predict_to(&mut self, t: f64, own: &Payload) -> Result<(), EstimatorError> {
        let dt = t - self.t;
        if dt > 0.0 {
            self.ekf.predict(&self.input(own), dt)?;
            self.t = t;
        }
        Ok(())
    }

    fn apply(&mut self, obs: &RangeObservation) -> Result<(), EstimatorError> {
        if self.ekf.update(obs)? == crate::estimator::UpdateOutcome::Applied {
            self.ranges_used += 1;
        }
        Ok(())
    }

    pub fn estimate(&self) -> RelativeState {
        self.ekf.x
    }
}

struct Follow {
    offset: Vector2<f64>,
    frame: OffsetFrame,
    feed_forward: bool,
    yaw_dither: f64,
    yaw_dither_period: f64,
    /// Yaw rate per radian of estimated relative yaw, turning the follower
    /// toward robot 0's heading.
    heading_gain: f64,
}

#[derive(Debug, Clone, Copy)]
struct ActivePhase {
    kind: PhaseKind,
    start_step: u64,
}

/// Straight scripted leader path with a gate plane across it.
#[derive(Debug, Clone)]
pub struct LeaderTrack {
    pub start: Vector2<f64>,
    pub direction: Vector2<f64>,
    /// Signed lateral offset of each robot when it crossed the gate plane.
    pub crossings: Vec<Option<f64>>,
    last_along: Vec<f64>,
}

impl LeaderTrack {
    fn new(leader: &RobotTruth, robots: &[RobotTruth]) -> Self {
        let direction = Vector2::new(Float::cos(leader.yaw), Float::sin(leader.yaw));
        let mut track = Self { start: leader.pos, direction, crossings: vec![None; robots.len()], last_along: vec![] };
        track.last_along = robots.iter().map(|r| track.along(r.pos)).collect();
        track
    }

    pub fn along(&self, p: Vector2<f64>) -> f64 {
        (p - self.start).dot(&self.direction)
    }

    pub fn lateral(&self, p: Vector2<f64>) -> f64 {
        let d = p - self.start;
        self.direction.x * d.y - self.direction.y * d.x
    }

    fn observe(&mut self, robots: &[RobotTruth], gate_distance: f64) {
        for (k, r) in robots.iter().enumerate() {
            let s = self.along(r.pos);
            if self.crossings[k].is_none() && self.last_along[k] < gate_distance && s >= gate_distance {
                self.crossings[k] = Some(self.lateral(r.pos));
            }
            self.last_along[k] = s;
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    cfg: ScenarioConfig,
    step: u64,
    robots: Vec<RobotTruth>,
    sensed: Vec<Payload>,
    filters: Vec<PairFilter>,
    schedule: Schedule,
    next_slot: u64,
    rng: ChaCha8Rng,
    maneuvers: Vec<StartupManeuver>,
    pids: Vec<Pid>,
    phases: Vec<Phase>,
    active: Option<ActivePhase>,
    leader: Option<LeaderTrack>,
    anchor: Option<StartupManeuver>,
    record: RecordOptions,
    trace: Trace,
}

impl World {
    /// Robot 0 at the origin with zero yaw; the others placed at random.
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(PLACEMENT_STREAM);
        let (s, ys) = (cfg.placement.spread, cfg.placement.yaw_spread);
        let robots = (0..cfg.robots)
            .map(|k| {
                if k == 0 {
                    RobotTruth::at(Vector2::zeros(), 0.0, cfg.height_of(0))
                } else {
                    let x = if s > 0.0 { rng.gen_range(-s..=s) } else { 0.0 };
                    let y = if s > 0.0 { rng.gen_range(-s..=s) } else { 0.0 };
                    let yaw = if ys > 0.0 { rng.gen_range(-ys..=ys) } else { 0.0 };
                    RobotTruth::at(Vector2::new(x, y), yaw, cfg.height_of(k))
                }
            })
            .collect();
        Self::with_robots(cfg, robots)
    }

    pub fn with_robots(cfg: ScenarioConfig, robots: Vec<RobotTruth>) -> Result<Self, SimError> {
        cfg.validate()?;
        if robots.len() != cfg.robots {
            return Err(ConfigError::Invalid { field: "robots", reason: "robot count does not match" }.into());
        }
        let n = cfg.robots;
        let template = cfg.ekf.initial_state().map_err(|_| ConfigError::Invalid {
            field: "ekf",
            reason: "p0 must be non-negative and noise parameters positive",
        })?;
        let mut filters = Vec::with_capacity(n * (n - 1));
        for observer in 0..n {
            for target in (0..n).filter(|&t| t != observer) {
                filters.push(PairFilter {
                    observer,
                    target,
                    ekf: template,
                    pipeline: RangePipeline::new(cfg.pipeline.median_window, cfg.pipeline.bias)?,
                    peer: Payload::default(),
                    t: 0.0,
                    pending: Vec::new(),
                    ranges_used: 0,
                });
            }
        }
        let period_steps = 2 * Float::round(cfg.startup_period / (2.0 * cfg.dt)) as u64;
        let maneuvers = (0..n)
            .map(|k| {
                StartupManeuver::new(
                    cfg.seed,
                    MANEUVER_STREAM_BASE + k as u64,
                    cfg.v_max,
                    cfg.startup_yaw_rate_max,
                    period_steps,
                )
            })
            .collect();
        let pids = (0..n).map(|_| Pid::new(cfg.formation.gains, cfg.v_max)).collect();
        let pairs = cfg.tracked_pairs();
        let sensed = robots.iter().map(|r: &RobotTruth| Payload { h: r.height, ..Payload::default() }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(0);
        Ok(Self {
            schedule: Schedule::new(n, cfg.slot_time)?,
            phases: cfg.phases.clone(),
            trace: Trace { errors: vec![Vec::new(); pairs.len()], pairs, ..Trace::default() },
            cfg,
            step: 0,
            robots,
            sensed,
            filters,
            next_slot: 0,
            rng,
            maneuvers,
            pids,
            active: None,
            leader: None,
            anchor: None,
            record: RecordOptions::default(),
        })
    }

    pub fn set_recording(&mut self, record: RecordOptions) {
        self.record = record;
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn robots(&self) -> &[RobotTruth] {
        &self.robots
    }

    pub fn sensed(&self) -> &[Payload] {
        &self.sensed
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn controller_integral(&self, robot: usize) -> Vector2<f64> {
        self.pids[robot].integral()
    }

    pub fn leader_track(&self) -> Option<&LeaderTrack> {
        self.leader.as_ref()
    }

    fn filter_index(&self, observer: usize, target: usize) -> usize {
        debug_assert!(observer != target);
        observer * (self.cfg.robots - 1) + if target > observer { target - 1 } else { target }
    }

    pub fn filter(&self, observer: usize, target: usize) -> &PairFilter {
        &self.filters[self.filter_index(observer, target)]
    }

    pub fn estimate(&self, observer: usize, target: usize) -> RelativeState {
        self.filter(observer, target).estimate()
    }

    pub fn true_relative(&self, observer: usize, target: usize) -> RelativeState {
        relative_state(&self.robots[observer], &self.robots[target])
    }

    /// Noise-free inputs of the pair at the current instant.
    pub fn true_input(&self, observer: usize, target: usize) -> InputVector {
        let (a, b) = (&self.robots[observer], &self.robots[target]);
        InputVector { v_i: a.velocity, r_i: a.yaw_rate, v_j: b.velocity, r_j: b.yaw_rate }
    }

    pub fn phase(&self) -> PhaseKind {
        self.phase_at(self.step).kind
    }

    fn phase_at(&self, step: u64) -> Phase {
        let t = step as f64 * self.cfg.dt + 0.5 * self.cfg.dt;
        *self.phases.iter().rev().find(|p| p.start <= t).unwrap_or(&self.phases[0])
    }

    /// Replaces the remaining phase schedule with `kind`, starting now.
    pub fn switch_phase(&mut self, kind: PhaseKind) {
        let now = self.time();
        self.phases.retain(|p| p.start < now - 0.5 * self.cfg.dt);
        self.phases.push(Phase { kind, start: now });
    }

    pub fn run(&mut self) -> Result<(), SimError> {
        let end = self.cfg.steps();
        self.run_until(end)
    }

    pub fn run_until(&mut self, end_step: u64) -> Result<(), SimError> {
        while self.step < end_step {
            self.step()?;
        }
        Ok(())
    }

    pub fn run_for(&mut self, seconds: f64) -> Result<(), SimError> {
        let end = self.step + Float::round(seconds / self.cfg.dt) as u64;
        self.run_until(end)
    }

    pub fn step(&mut self) -> Result<(), SimError> {
        let dt = self.cfg.dt;
        let t = self.time();
        self.enter_phase();
        let commands = self.commands();
        for (robot, cmd) in self.robots.iter_mut().zip(&commands) {
            robot.apply(cmd, self.cfg.v_max);
        }
        for k in 0..self.robots.len() {
            self.sensed[k] = self.sense(k, t)?;
        }

        let substeps = self.cfg.substeps as u64;
        let h = dt / substeps as f64;
        let base = self.step * substeps;
        for sub in 0..substeps {
            let sub_end = (base + sub + 1) as f64 * h;
            while self.schedule.slot_start(self.next_slot) < sub_end {
                self.exchange(self.schedule.slot_start(self.next_slot))?;
                self.next_slot += 1;
            }
            for r in &mut self.robots {
                r.advance(h);
            }
        }

        self.step += 1;
        let t_end = self.time();
        for idx in 0..self.filters.len() {
            let own = self.sensed[self.filters[idx].observer];
            let f = &mut self.filters[idx];
            let (observer, target) = (f.observer, f.target);
            let fail = |source| SimError::Estimator { t: t_end, observer, target, source };
            f.predict_to(t_end, &own).map_err(fail)?;
            let mut pending = core::mem::take(&mut f.pending);
            pending.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
            for obs in &pending {
                f.apply(obs).map_err(fail)?;
            }
        }
        for (k, r) in self.robots.iter().enumerate() {
            if !r.is_finite() {
                return Err(SimError::NonFinite { t: t_end, robot: k, state: *r });
            }
        }
        if let Some(track) = &mut self.leader {
            track.observe(&self.robots, self.cfg.leader.gate_distance);
        }
        self.record_step(t_end);
        Ok(())
    }

    fn record_step(&mut self, t: f64) {
        for (k, &(i, j)) in self.trace.pairs.iter().enumerate() {
            let sample = ErrorSample {
                t,
                truth: relative_state(&self.robots[i], &self.robots[j]),
                estimate: self.filters[self.filter_index(i, j)].estimate(),
            };
            self.trace.errors[k].push(sample);
        }
        if let Some(every) = self.record.poses_every {
            if self.step.is_multiple_of(every.max(1)) {
                for (robot, r) in self.robots.iter().enumerate() {
                    self.trace.poses.push(PoseRecord {
                        t,
                        robot,
                        x: r.pos.x,
                        y: r.pos.y,
                        yaw: r.yaw,
                        height: r.height,
                    });
                }
            }
        }
    }

    fn enter_phase(&mut self) {
        let phase = self.phase_at(self.step);
        if self.active.is_some_and(|a| a.kind == phase.kind) {
            return;
        }
        self.active = Some(ActivePhase { kind: phase.kind, start_step: self.step });
        for pid in &mut self.pids {
            pid.reset();
        }
        self.leader = match phase.kind {
            PhaseKind::LeaderFollower => {
                let gains = self.cfg.leader.gains;
                self.pids = (0..self.cfg.robots).map(|_| Pid::new(gains, self.cfg.v_max)).collect();
                Some(LeaderTrack::new(&self.robots[0], &self.robots))
            }
            _ => {
                let f = &self.cfg.formation;
                self.anchor = (phase.kind == PhaseKind::Formation && f.anchor_speed > 0.0).then(|| {
                    let period = 2 * Float::round(self.cfg.startup_period / (2.0 * self.cfg.dt)) as u64;
                    StartupManeuver::new(self.cfg.seed, ANCHOR_STREAM, f.anchor_speed, 0.0, period)
                });
                let gains = self.cfg.formation.gains;
                self.pids = (0..self.cfg.robots).map(|_| Pid::new(gains, self.cfg.v_max)).collect();
                None
            }
        };
    }

    fn commands(&mut self) -> Vec<Command> {
        let active = self.active.expect("phase entered");
        let k = self.step - active.start_step;
        let n = self.robots.len();
        match active.kind {
            PhaseKind::RandomStartup => self.maneuvers.iter_mut().map(|m| m.command(k)).collect(),
            PhaseKind::Hover => vec![Command::HOVER; n],
            PhaseKind::LockedFlight => {
                let lead = self.maneuvers[0].command(k);
                vec![Command::world(lead.velocity, 0.0); n]
            }
            PhaseKind::TargetHover => {
                (0..n).map(|r| if r == 1 { Command::HOVER } else { self.maneuvers[r].command(k) }).collect()
            }
            PhaseKind::Formation => {
                let mut cmds = vec![Command::HOVER; n];
                if let Some(anchor) = &mut self.anchor {
                    cmds[0] = anchor.command(k);
                }
                let f = self.cfg.formation.clone();
                for (r, &offset) in f.offsets.iter().enumerate().map(|(k, o)| (k + 1, o)) {
                    let offset = Vector2::from(offset);
                    let follow = Follow {
                        offset,
                        frame: f.frame,
                        feed_forward: f.feed_forward,
                        yaw_dither: f.yaw_dither,
                        yaw_dither_period: f.yaw_dither_period,
                        heading_gain: 0.0,
                    };
                    cmds[r] = self.follow(r, &follow, k);
                }
                cmds
            }
            PhaseKind::LeaderFollower => {
                let mut cmds = vec![Command::HOVER; n];
                let track = self.leader.as_ref().expect("leader track set on phase entry");
                let travelled = track.along(self.robots[0].pos);
                if travelled < self.cfg.leader.path_length {
                    cmds[0] = Command::world(track.direction * self.cfg.leader.speed, 0.0);
                }
                let l = self.cfg.leader;
                // the offset is written in the leader frame; aligned headings
                // make it the negated set point in the follower frame
                let (offset, heading_gain) = match l.frame {
                    OffsetFrame::Anchor => (Vector2::from(l.offset), 0.0),
                    OffsetFrame::Follower => (-Vector2::from(l.offset), l.heading_gain),
                };
                let follow = Follow {
                    offset,
                    frame: l.frame,
                    feed_forward: l.feed_forward,
                    yaw_dither: l.yaw_dither,
                    yaw_dither_period: l.yaw_dither_period,
                    heading_gain,
                };
                for (r, cmd) in cmds.iter_mut().enumerate().skip(1) {
                    *cmd = self.follow(r, &follow, k);
                }
                cmds
            }
        }
    }

    /// PID on the estimated position of robot 0 plus optional feed-forward
    /// and yaw excitation.
    fn follow(&mut self, r: usize, spec: &Follow, k: u64) -> Command {
        let dt = self.cfg.dt;
        let est = self.estimate(r, 0);
        let rot = rotation(est.psi);
        let desired = match spec.frame {
            OffsetFrame::Follower => spec.offset,
            // follower at `offset` in robot 0's frame puts robot 0 at -R(psi) offset
            OffsetFrame::Anchor => -(rot * spec.offset),
        };
        let yaw_rate = spec.heading_gain * est.psi
            + spec.yaw_dither * Float::sin(core::f64::consts::TAU * k as f64 * dt / spec.yaw_dither_period);
        let mut v = self.pids[r].update(est.position() - desired, dt);
        if spec.feed_forward {
            // velocity that holds the relative position on its set point
            let peer = self.filter(r, 0).peer;
            v += match spec.frame {
                OffsetFrame::Follower => rot * peer.v.as_vector() - SKEW * est.position() * yaw_rate,
                OffsetFrame::Anchor => rot * (peer.v.as_vector() + SKEW * spec.offset * peer.r),
            };
        }
        Command::body(v, yaw_rate)
    }

    /// Noisy onboard measurement of velocity, yaw rate and height.
    fn sense(&mut self, k: usize, t: f64) -> Result<Payload, SimError> {
        let noise = self.cfg.input_noise;
        let r = self.robots[k];
        let att = r.attitude;
        let m = att.body_to_horizontal();
        let v_body = m.transpose() * Vector3::new(r.velocity.vx, r.velocity.vy, 0.0);
        let mut n3 = [0.0; 3];
        for v in &mut n3 {
            *v = StandardNormal.sample(&mut self.rng);
        }
        let v_meas = v_body + Vector3::from(n3) * noise.sigma_v;
        let body_rate = r.yaw_rate * Float::cos(att.roll) / Float::cos(att.pitch);
        let roll_noise: f64 = StandardNormal.sample(&mut self.rng);
        let yaw_noise: f64 = StandardNormal.sample(&mut self.rng);
        let rates =
            BodyRates { roll_rate: noise.sigma_r * roll_noise, yaw_rate: body_rate + noise.sigma_r * yaw_noise };
        let h_noise: f64 = StandardNormal.sample(&mut self.rng);
        let fail = |source| SimError::Kinematics { t, robot: k, source };
        let v = body_to_horizontal_velocity(v_meas, att).map_err(fail)?;
        let yaw_rate = body_to_horizontal_yaw_rate(rates, att, YawRateMode::Full).map_err(fail)?;
        Ok(Payload { v, r: yaw_rate, h: r.height + noise.sigma_h * h_noise })
    }

    fn exchange(&mut self, t: f64) -> Result<(), SimError> {
        let slot = self.next_slot;
        let pair = self.schedule.pair_at(slot);
        let outcome = simulate_exchange(pair, t, &self.cfg.channel, &self.robots, &self.sensed, &mut self.rng);
        let event = match outcome {
            Exchange::Dropped { i, j, t, d_true } => {
                if self.record.events {
                    self.trace.events.push(EventRecord {
                        t,
                        i,
                        j,
                        d_true,
                        d_raw: f64::NAN,
                        d_filtered: f64::NAN,
                        d_corrected: f64::NAN,
                        outlier: false,
                        dropped: true,
                    });
                }
                return Ok(());
            }
            Exchange::Event(e) => e,
        };
        let mut processed = (0.0, 0.0);
        for (observer, target, peer) in [(event.i, event.j, event.payload_j), (event.j, event.i, event.payload_i)] {
            let own = self.sensed[observer];
            let idx = self.filter_index(observer, target);
            let timing = self.cfg.timing;
            let f = &mut self.filters[idx];
            let fail = |source| SimError::Estimator { t, observer, target, source };
            processed = f.pipeline.process(event.d_raw);
            if timing == UpdateTiming::AtEvent {
                f.predict_to(t, &own).map_err(fail)?;
            }
            f.peer = peer;
            let obs = RangeObservation { distance: processed.1, h_i: own.h, h_j: peer.h, timestamp: t };
            match timing {
                UpdateTiming::AtEvent => f.apply(&obs).map_err(fail)?,
                UpdateTiming::EndOfStep => f.pending.push(obs),
            }
        }
        if self.record.events {
            self.trace.events.push(EventRecord {
                t,
                i: event.i,
                j: event.j,
                d_true: event.d_true,
                d_raw: event.d_raw,
                d_filtered: processed.0,
                d_corrected: processed.1,
                outlier: event.outlier,
                dropped: false,
            });
        }
        Ok(())
    }
}
