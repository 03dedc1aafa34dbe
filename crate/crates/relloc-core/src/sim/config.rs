//! Scenario configuration. Defaults reproduce the two-robot simulation setup:
//! 100 Hz inputs, 1 m/s speed cap, 0.25 m/s and 0.01 rad/s input noise and
//! 0.1 m gaussian ranging noise.
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Matrix3, Vector3};

use crate::estimator::{EkfState, EstimatorError, NoiseParams, DEFAULT_GATE_RECOVERY, DEFAULT_GATE_SIGMAS};
use crate::ranging::{BiasModel, ChannelModel, DEFAULT_MEDIAN_WINDOW, DEFAULT_SLOT_TIME};

use super::control::PidGains;
use super::metrics::ConvergenceCriterion;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Invalid { field: &'static str, reason: &'static str },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Invalid { field, reason } => write!(f, "invalid `{field}`: {reason}"),
        }
    }
}

impl core::error::Error for ConfigError {}

fn invalid(field: &'static str, reason: &'static str) -> ConfigError {
    ConfigError::Invalid { field, reason }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PhaseKind {
    /// Zero-net-displacement random excitation for filter convergence.
    RandomStartup,
    /// Robots hold offsets to robot 0 through PID control on the estimates.
    Formation,
    /// Robot 0 flies a scripted path, the others follow on estimates.
    LeaderFollower,
    Hover,
    /// Every robot flies robot 0's start-up velocity with zero yaw rate:
    /// zero relative velocity, the formation-lock regime.
    LockedFlight,
    /// Robot 1 hovers while the others keep the start-up maneuver.
    TargetHover,
}

impl PhaseKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::RandomStartup => "random_startup",
            Self::Formation => "formation",
            Self::LeaderFollower => "leader_follower",
            Self::Hover => "hover",
            Self::LockedFlight => "locked_flight",
            Self::TargetHover => "target_hover",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Phase {
    pub kind: PhaseKind,
    /// s
    pub start: f64,
}

/// Noise on the sensed and communicated inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct InputNoise {
    /// m/s, per body axis
    pub sigma_v: f64,
    /// rad/s
    pub sigma_r: f64,
    /// Height jitter, m.
    pub sigma_h: f64,
}

impl Default for InputNoise {
    fn default() -> Self {
        Self { sigma_v: 0.25, sigma_r: 0.01, sigma_h: 0.01 }
    }
}

impl InputNoise {
    pub const NONE: InputNoise = InputNoise { sigma_v: 0.0, sigma_r: 0.0, sigma_h: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PipelineConfig {
    pub median_window: usize,
    /// Bias removed from the filtered range before it reaches the filter.
    pub bias: BiasModel,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { median_window: DEFAULT_MEDIAN_WINDOW, bias: BiasModel::NONE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EkfConfig {
    pub noise: NoiseParams,
    /// Diagonal of the initial covariance.
    pub p0: [f64; 3],
    pub gate_sigmas: f64,
    /// Consecutive gate rejections before one range is forced through.
    pub gate_recovery: u32,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            noise: NoiseParams::default(),
            p0: [10.0, 10.0, 0.1],
            gate_sigmas: DEFAULT_GATE_SIGMAS,
            gate_recovery: DEFAULT_GATE_RECOVERY,
        }
    }
}

impl EkfConfig {
    pub fn initial_state(&self) -> Result<EkfState, EstimatorError> {
        let p0 = Matrix3::from_diagonal(&Vector3::from(self.p0));
        let mut s = EkfState::with_noise(p0, self.noise)?;
        s.gate_sigmas = self.gate_sigmas;
        s.gate_recovery = self.gate_recovery;
        Ok(s)
    }
}

/// When measurement updates happen relative to the input-rate prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum UpdateTiming {
    /// Predict up to each ranging timestamp, then update.
    #[default]
    AtEvent,
    /// Predict whole input steps and apply the step's ranges afterwards.
    EndOfStep,
}

/// Random initial placement of robots 1.. around robot 0 (origin, yaw 0).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Placement {
    /// Positions uniform in `[-spread, spread]^2`, m.
    pub spread: f64,
    /// Yaw uniform in `[-yaw_spread, yaw_spread]`, rad.
    pub yaw_spread: f64,
}

impl Default for Placement {
    fn default() -> Self {
        Self { spread: 3.0, yaw_spread: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FormationSpec {
    /// One offset per robot other than robot 0, m. See [`OffsetFrame`].
    pub offsets: Vec<[f64; 2]>,
    pub frame: OffsetFrame,
    pub gains: PidGains,
    /// Robot 0 keeps flying the zero-net-displacement maneuver at this speed
    /// (without turning) while the others hold the pattern; `0` makes it hover.
    pub anchor_speed: f64,
    /// Add the anchor's communicated velocity, rotated into the follower
    /// frame, to the PID output.
    pub feed_forward: bool,
    /// Amplitude of a sinusoidal follower yaw rate, rad/s. With offsets in
    /// the follower frame, turning swings the follower around robot 0; the
    /// resulting relative motion keeps the position estimate observable while
    /// the pattern is held.
    pub yaw_dither: f64,
    pub yaw_dither_period: f64,
}

/// Frame the formation offsets are written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OffsetFrame {
    /// Follower position in robot 0's frame; the pattern turns with robot 0.
    Anchor,
    /// Robot 0's position in the follower's own frame. The controller never
    /// needs the relative yaw estimate.
    #[default]
    Follower,
}

impl Default for FormationSpec {
    /// Four followers around a hovering robot 0, two abreast and two on the
    /// diagonals.
    fn default() -> Self {
        Self {
            offsets: vec![[1.2, 0.0], [-1.2, 0.0], [0.6, -0.6], [-0.6, -0.6]],
            frame: OffsetFrame::Follower,
            gains: PidGains::default(),
            anchor_speed: 0.0,
            feed_forward: true,
            yaw_dither: 0.8,
            yaw_dither_period: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LeaderSpec {
    /// Follower position in the leader's horizontal frame, m.
    pub offset: [f64; 2],
    /// Frame the follower controls in. `follower` turns the follower toward
    /// the leader's heading and holds the leader at `-offset` in its own
    /// frame; `anchor` rotates the offset with the estimated relative yaw.
    pub frame: OffsetFrame,
    /// Follower yaw rate per radian of estimated heading difference, 1/s.
    pub heading_gain: f64,
    /// Leader speed along its heading, m/s.
    pub speed: f64,
    pub path_length: f64,
    /// Distance along the path to the gate plane, m.
    pub gate_distance: f64,
    pub gate_width: f64,
    pub gains: PidGains,
    pub feed_forward: bool,
    /// Amplitude of a sinusoidal follower yaw rate, rad/s. Turning keeps the
    /// relative yaw observable while both robots share a velocity.
    pub yaw_dither: f64,
    pub yaw_dither_period: f64,
}

impl Default for LeaderSpec {
    fn default() -> Self {
        Self {
            offset: [-1.0, 0.0],
            frame: OffsetFrame::Follower,
            heading_gain: 1.0,
            speed: 0.2,
            path_length: 8.0,
            gate_distance: 5.0,
            gate_width: 0.8,
            gains: PidGains::default(),
            feed_forward: true,
            yaw_dither: 0.3,
            yaw_dither_period: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ScenarioConfig {
    pub robots: usize,
    /// Input and prediction period, s.
    pub dt: f64,
    pub duration: f64,
    /// Ground-truth Euler sub-steps per input period.
    pub substeps: u32,
    pub seed: u64,
    pub v_max: f64,
    /// Start-up yaw rates are uniform in `[-max, max]`, rad/s.
    pub startup_yaw_rate_max: f64,
    pub startup_period: f64,
    pub input_noise: InputNoise,
    pub channel: ChannelModel,
    pub pipeline: PipelineConfig,
    pub slot_time: f64,
    pub ekf: EkfConfig,
    pub timing: UpdateTiming,
    pub placement: Placement,
    /// Per-robot flight heights; empty means 1 m for everyone.
    pub heights: Vec<f64>,
    pub phases: Vec<Phase>,
    pub formation: FormationSpec,
    pub leader: LeaderSpec,
    pub criterion: ConvergenceCriterion,
    /// Ordered `(observer, target)` pairs whose errors are recorded. Empty
    /// means `(0, 1)` for two-robot runs and `(k, 0)` for every `k` otherwise.
    pub tracked: Vec<[usize; 2]>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            robots: 2,
            dt: 0.01,
            duration: 65.0,
            substeps: 10,
            seed: 0,
            v_max: 1.0,
            startup_yaw_rate_max: 0.5,
            startup_period: 2.0,
            input_noise: InputNoise::default(),
            channel: ChannelModel::gaussian(0.1),
            pipeline: PipelineConfig::default(),
            slot_time: DEFAULT_SLOT_TIME,
            ekf: EkfConfig::default(),
            timing: UpdateTiming::default(),
            placement: Placement::default(),
            heights: Vec::new(),
            phases: vec![Phase { kind: PhaseKind::RandomStartup, start: 0.0 }],
            formation: FormationSpec::default(),
            leader: LeaderSpec::default(),
            criterion: ConvergenceCriterion::default(),
            tracked: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    /// Five robots: start-up maneuver, then formation on robot 0.
    pub fn formation() -> Self {
        Self {
            robots: 5,
            duration: 85.0,
            phases: vec![
                Phase { kind: PhaseKind::RandomStartup, start: 0.0 },
                Phase { kind: PhaseKind::Formation, start: 60.0 },
            ],
            ..Self::default()
        }
    }

    /// Leader and one follower: start-up maneuver, then the scripted pass.
    pub fn leader_follower() -> Self {
        Self {
            robots: 2,
            // the pass ends as the leader reaches the end of its path
            duration: 100.0,
            phases: vec![
                Phase { kind: PhaseKind::RandomStartup, start: 0.0 },
                Phase { kind: PhaseKind::LeaderFollower, start: 60.0 },
            ],
            ..Self::default()
        }
    }

    pub fn steps(&self) -> u64 {
        num_traits::Float::round(self.duration / self.dt) as u64
    }

    pub fn height_of(&self, robot: usize) -> f64 {
        self.heights.get(robot).copied().unwrap_or(1.0)
    }

    pub fn tracked_pairs(&self) -> Vec<(usize, usize)> {
        if !self.tracked.is_empty() {
            return self.tracked.iter().map(|p| (p[0], p[1])).collect();
        }
        if self.robots == 2 {
            vec![(0, 1)]
        } else {
            (1..self.robots).map(|k| (k, 0)).collect()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if self.robots < 2 {
            return Err(invalid("robots", "at least 2 robots are required"));
        }
        if !pos(self.dt) {
            return Err(invalid("dt", "must be positive"));
        }
        if !pos(self.duration) {
            return Err(invalid("duration", "must be positive"));
        }
        if self.substeps == 0 {
            return Err(invalid("substeps", "must be at least 1"));
        }
        if !pos(self.v_max) {
            return Err(invalid("v_max", "must be positive"));
        }
        if !(self.startup_yaw_rate_max >= 0.0 && self.startup_yaw_rate_max.is_finite()) {
            return Err(invalid("startup_yaw_rate_max", "must be finite and non-negative"));
        }
        let half = self.startup_period / (2.0 * self.dt);
        if !pos(self.startup_period) || num_traits::Float::abs(half - num_traits::Float::round(half)) > 1e-9 {
            return Err(invalid("startup_period", "must be a positive even multiple of dt"));
        }
        let n = self.input_noise;
        if [n.sigma_v, n.sigma_r, n.sigma_h].iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(invalid("input_noise", "standard deviations must be finite and non-negative"));
        }
        if self.channel.validate().is_err() {
            return Err(invalid("channel", "probabilities must lie in [0, 1], sigma_d >= 0, outlier range ordered"));
        }
        if self.pipeline.median_window == 0 {
            return Err(invalid("pipeline.median_window", "must be at least 1"));
        }
        if !pos(self.slot_time) {
            return Err(invalid("slot_time", "must be positive"));
        }
        if self.ekf.initial_state().is_err() {
            return Err(invalid("ekf", "p0 must be non-negative and noise parameters positive"));
        }
        if !(self.ekf.gate_sigmas > 0.0) {
            return Err(invalid("ekf.gate_sigmas", "must be positive"));
        }
        if self.heights.iter().any(|h| !pos(*h)) {
            return Err(invalid("heights", "must be positive"));
        }
        if self.phases.is_empty() || self.phases[0].start != 0.0 {
            return Err(invalid("phases", "the first phase must start at 0"));
        }
        if self.phases.windows(2).any(|w| !(w[1].start > w[0].start)) {
            return Err(invalid("phases", "start times must be strictly increasing"));
        }
        let uses = |k: PhaseKind| self.phases.iter().any(|p| p.kind == k);
        if uses(PhaseKind::Formation) {
            if self.formation.offsets.len() != self.robots - 1 {
                return Err(invalid("formation.offsets", "need one offset per robot other than robot 0"));
            }
            if self.formation.offsets.iter().flatten().any(|v| !v.is_finite()) {
                return Err(invalid("formation.offsets", "must be finite"));
            }
            self.formation.gains.validate().map_err(|r| invalid("formation.gains", r))?;
            let f = &self.formation;
            if !(f.anchor_speed >= 0.0 && f.anchor_speed <= self.v_max) {
                return Err(invalid("formation.anchor_speed", "must lie in [0, v_max]"));
            }

            if !(f.yaw_dither >= 0.0 && f.yaw_dither.is_finite() && pos(f.yaw_dither_period)) {
                return Err(invalid("formation", "yaw_dither must be non-negative and yaw_dither_period positive"));
            }
        }
        if uses(PhaseKind::LeaderFollower) {
            let l = &self.leader;
            if !(pos(l.speed) && pos(l.path_length) && pos(l.gate_width)) || !l.gate_distance.is_finite() {
                return Err(invalid("leader", "speed, path_length and gate_width must be positive"));
            }
            l.gains.validate().map_err(|r| invalid("leader.gains", r))?;
            if !(l.heading_gain >= 0.0 && l.heading_gain.is_finite()) {
                return Err(invalid("leader.heading_gain", "must be finite and non-negative"));
            }
            if !(l.yaw_dither >= 0.0 && l.yaw_dither.is_finite() && pos(l.yaw_dither_period)) {
                return Err(invalid("leader", "yaw_dither must be non-negative and yaw_dither_period positive"));
            }
        }
        let c = &self.criterion;
        if !(pos(c.position_tol) && pos(c.yaw_tol) && c.hold >= 0.0) {
            return Err(invalid("criterion", "tolerances must be positive"));
        }
        if self.tracked.iter().any(|p| p[0] >= self.robots || p[1] >= self.robots || p[0] == p[1]) {
            return Err(invalid("tracked", "pairs must name two distinct existing robots"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
        ScenarioConfig::formation().validate().unwrap();
        ScenarioConfig::leader_follower().validate().unwrap();
    }

    #[test]
    fn default_matches_simulation_setup() {
        let c = ScenarioConfig::default();
        assert_eq!(c.dt, 0.01);
        assert_eq!(c.v_max, 1.0);
        assert_eq!(c.input_noise.sigma_v, 0.25);
        assert_eq!(c.input_noise.sigma_r, 0.01);
        assert_eq!(c.channel.sigma_d, 0.1);
        assert_eq!(c.ekf.p0, [10.0, 10.0, 0.1]);
        assert_eq!(c.placement.spread, 3.0);
        assert_eq!(c.placement.yaw_spread, 1.0);
    }

    #[test]
    fn rejects_single_robot_formation() {
        let c = ScenarioConfig { robots: 1, ..ScenarioConfig::formation() };
        assert!(matches!(c.validate(), Err(ConfigError::Invalid { field: "robots", .. })));
    }

    #[test]
    fn rejects_unordered_phases() {
        let mut c = ScenarioConfig::default();
        c.phases.push(Phase { kind: PhaseKind::Hover, start: 0.0 });
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_missing_offsets() {
        let mut c = ScenarioConfig::formation();
        c.formation.offsets.pop();
        assert!(matches!(c.validate(), Err(ConfigError::Invalid { field: "formation.offsets", .. })));
    }

    #[test]
    fn default_tracked_pairs() {
        assert_eq!(ScenarioConfig::default().tracked_pairs(), vec![(0, 1)]);
        assert_eq!(ScenarioConfig::formation().tracked_pairs(), vec![(1, 0), (2, 0), (3, 0), (4, 0)]);
    }
}
