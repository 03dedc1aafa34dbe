//! Observability sweeps over sampled `(X, U)` grids.
//!
//! A grid file is TOML with a `kind` key:
//!
//! * `cartesian`: the product of value lists per variable (`x`, `y`, `psi`,
//!   `vix`, `viy`, `ri`, `vjx`, `vjy`, `rj`); a missing list means `[0.0]`.
//! * `random`: `samples` draws, uniform in the given ranges.
//! * `formation_lock`: random states on the lock manifold
//!   `v_i = R(psi) v_j`, `r_i = r_j = 0`.
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relloc_core::kinematics::rotation;
use relloc_core::observability::{analyze, RegimeThresholds};
use relloc_core::{HorizontalVelocity, InputVector, ObservabilityReport, RelativeState};
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;

/// Upper bound on a cartesian product, to catch typos before allocating.
pub const MAX_POINTS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    Cartesian(CartesianGrid),
    Random(RandomGrid),
    FormationLock(LockGrid),
}

fn zero() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CartesianGrid {
    // consumed by the dispatch in `parse_grid`
    #[serde(default, skip_serializing)]
    kind: String,
    #[serde(default = "zero")]
    pub x: Vec<f64>,
    #[serde(default = "zero")]
    pub y: Vec<f64>,
    #[serde(default = "zero")]
    pub psi: Vec<f64>,
    #[serde(default = "zero")]
    pub vix: Vec<f64>,
    #[serde(default = "zero")]
    pub viy: Vec<f64>,
    #[serde(default = "zero")]
    pub ri: Vec<f64>,
    #[serde(default = "zero")]
    pub vjx: Vec<f64>,
    #[serde(default = "zero")]
    pub vjy: Vec<f64>,
    #[serde(default = "zero")]
    pub rj: Vec<f64>,
    #[serde(default)]
    pub thresholds: RegimeThresholds,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomGrid {
    #[serde(default, skip_serializing)]
    kind: String,
    pub samples: usize,
    pub seed: u64,
    /// Range of each position coordinate, m.
    pub position: [f64; 2],
    pub yaw: [f64; 2],
    /// Range of each velocity component, m/s.
    pub velocity: [f64; 2],
    pub yaw_rate: [f64; 2],
    pub thresholds: RegimeThresholds,
}

impl Default for RandomGrid {
    fn default() -> Self {
        Self {
            kind: String::new(),
            samples: 1000,
            seed: 0,
            position: [-3.0, 3.0],
            yaw: [-core::f64::consts::PI, core::f64::consts::PI],
            velocity: [-1.0, 1.0],
            yaw_rate: [-1.0, 1.0],
            thresholds: RegimeThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct LockGrid {
    #[serde(default, skip_serializing)]
    kind: String,
    pub samples: usize,
    pub seed: u64,
    pub position: [f64; 2],
    pub yaw: [f64; 2],
    /// Range of each component of the shared velocity `v_j`, m/s.
    pub velocity: [f64; 2],
    pub thresholds: RegimeThresholds,
}

impl Default for LockGrid {
    fn default() -> Self {
        let r = RandomGrid::default();
        Self {
            kind: String::new(),
            samples: r.samples,
            seed: r.seed,
            position: r.position,
            yaw: r.yaw,
            velocity: r.velocity,
            thresholds: r.thresholds,
        }
    }
}

impl Default for CartesianGrid {
    fn default() -> Self {
        Self {
            kind: String::new(),
            x: zero(),
            y: zero(),
            psi: zero(),
            vix: zero(),
            viy: zero(),
            ri: zero(),
            vjx: zero(),
            vjy: zero(),
            rj: zero(),
            thresholds: RegimeThresholds::default(),
        }
    }
}

impl CartesianGrid {
    fn lists(&self) -> [&[f64]; 9] {
        [&self.x, &self.y, &self.psi, &self.vix, &self.viy, &self.ri, &self.vjx, &self.vjy, &self.rj]
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

fn ordered(name: &str, r: [f64; 2]) -> Result<(), String> {
    if r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] {
        Ok(())
    } else {
        Err(format!("`{name}` must be a finite range [lo, hi] with lo <= hi"))
    }
}

impl GridSpec {
    pub fn thresholds(&self) -> &RegimeThresholds {
        match self {
            Self::Cartesian(g) => &g.thresholds,
            Self::Random(g) => &g.thresholds,
            Self::FormationLock(g) => &g.thresholds,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let t = self.thresholds();
        if ![t.baseline, t.stationary_speed, t.lock_speed, t.lock_yaw_rate, t.det]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            return Err("thresholds must be positive and finite".into());
        }
        match self {
            Self::Cartesian(g) => {
                let lists = g.lists();
                if lists.iter().any(|l| l.is_empty()) {
                    return Err("every value list must be non-empty".into());
                }
                if lists.iter().flat_map(|l| l.iter()).any(|v| !v.is_finite()) {
                    return Err("grid values must be finite".into());
                }
                let n = lists.iter().try_fold(1usize, |acc, l| acc.checked_mul(l.len()));
                if n.is_none_or(|n| n > MAX_POINTS) {
                    return Err(format!("grid has more than {MAX_POINTS} points"));
                }
            }
            Self::Random(g) => {
                if g.samples == 0 || g.samples > MAX_POINTS {
                    return Err(format!("`samples` must lie in 1..={MAX_POINTS}"));
                }
                for (n, r) in
                    [("position", g.position), ("yaw", g.yaw), ("velocity", g.velocity), ("yaw_rate", g.yaw_rate)]
                {
                    ordered(n, r)?;
                }
            }
            Self::FormationLock(g) => {
                if g.samples == 0 || g.samples > MAX_POINTS {
                    return Err(format!("`samples` must lie in 1..={MAX_POINTS}"));
                }
                for (n, r) in [("position", g.position), ("yaw", g.yaw), ("velocity", g.velocity)] {
                    ordered(n, r)?;
                }
            }
        }
        Ok(())
    }

    /// The sampled points, in a deterministic order.
    pub fn points(&self) -> Vec<(RelativeState, InputVector)> {
        match self {
            Self::Cartesian(g) => {
                let lists = g.lists();
                let total: usize = lists.iter().map(|l| l.len()).product();
                // mixed-radix counter, last variable fastest
                (0..total)
                    .map(|mut k| {
                        let mut v = [0.0; 9];
                        for d in (0..9).rev() {
                            v[d] = lists[d][k % lists[d].len()];
                            k /= lists[d].len();
                        }
                        let u = InputVector {
                            v_i: HorizontalVelocity::new(v[3], v[4]),
                            r_i: v[5],
                            v_j: HorizontalVelocity::new(v[6], v[7]),
                            r_j: v[8],
                        };
                        (RelativeState::new(v[0], v[1], v[2]), u)
                    })
                    .collect()
            }
            Self::Random(g) => {
                let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
                (0..g.samples)
                    .map(|_| {
                        let x = RelativeState::new(
                            uniform(&mut rng, g.position),
                            uniform(&mut rng, g.position),
                            uniform(&mut rng, g.yaw),
                        );
                        let mut v = || uniform(&mut rng, g.velocity);
                        let v_i = HorizontalVelocity::new(v(), v());
                        let v_j = HorizontalVelocity::new(v(), v());
                        let u = InputVector {
                            v_i,
                            r_i: uniform(&mut rng, g.yaw_rate),
                            v_j,
                            r_j: uniform(&mut rng, g.yaw_rate),
                        };
                        (x, u)
                    })
                    .collect()
            }
            Self::FormationLock(g) => {
                let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
                (0..g.samples)
                    .map(|_| {
                        let x = RelativeState::new(
                            uniform(&mut rng, g.position),
                            uniform(&mut rng, g.position),
                            uniform(&mut rng, g.yaw),
                        );
                        let (vjx, vjy) = (uniform(&mut rng, g.velocity), uniform(&mut rng, g.velocity));
                        let r = rotation(x.psi);
                        let u = InputVector {
                            v_i: HorizontalVelocity::new(
                                r[(0, 0)] * vjx + r[(0, 1)] * vjy,
                                r[(1, 0)] * vjx + r[(1, 1)] * vjy,
                            ),
                            r_i: 0.0,
                            v_j: HorizontalVelocity::new(vjx, vjy),
                            r_j: 0.0,
                        };
                        (x, u)
                    })
                    .collect()
            }
        }
    }
}

pub fn parse_grid(text: &str, origin: &str) -> Result<GridSpec, ConfigError> {
    let err = |e: toml::de::Error| ConfigError::from_toml(origin, text, &e);
    let table: toml::Table = text.parse().map_err(err)?;
    // Dispatch by hand: deserializing the variant straight from the text keeps
    // toml's spans, which an internally tagged enum would drop.
    let grid = match table.get("kind").and_then(|k| k.as_str()) {
        Some("cartesian") => GridSpec::Cartesian(toml::from_str(text).map_err(err)?),
        Some("random") => GridSpec::Random(toml::from_str(text).map_err(err)?),
        Some("formation_lock") => GridSpec::FormationLock(toml::from_str(text).map_err(err)?),
        other => {
            let position = crate::config::locate_key(text, "kind");
            let message = match other {
                Some(k) => format!("unknown grid kind `{k}`, expected cartesian, random or formation_lock"),
                None => "missing string key `kind` (cartesian, random or formation_lock)".to_owned(),
            };
            return Err(ConfigError { origin: origin.to_owned(), position, message });
        }
    };
    grid.validate().map_err(|m| ConfigError::new(origin, m))?;
    Ok(grid)
}

pub fn load_grid(path: &Path) -> Result<GridSpec, ConfigError> {
    let origin = path.display().to_string();
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError::new(&origin, format!("cannot read file: {e}")))?;
    parse_grid(&text, &origin)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vix: f64,
    pub viy: f64,
    pub ri: f64,
    pub vjx: f64,
    pub vjy: f64,
    pub rj: f64,
    pub det: f64,
    pub det_closed: f64,
    pub rank: usize,
    /// `|`-separated regime flags, empty when none apply.
    pub flags: String,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub state: RelativeState,
    pub input: InputVector,
    pub report: ObservabilityReport,
}

impl SweepPoint {
    pub fn row(&self) -> SweepRow {
        let (x, u, r) = (&self.state, &self.input, &self.report);
        SweepRow {
            x: x.x,
            y: x.y,
            psi: x.psi,
            vix: u.v_i.vx,
            viy: u.v_i.vy,
            ri: u.r_i,
            vjx: u.v_j.vx,
            vjy: u.v_j.vy,
            rj: u.r_j,
            det: r.det,
            det_closed: r.det_closed_form,
            rank: r.rank,
            flags: r.flags.to_string(),
        }
    }
}

pub fn sweep(grid: &GridSpec) -> Vec<SweepPoint> {
    let t = *grid.thresholds();
    grid.points()
        .into_iter()
        .map(|(state, input)| SweepPoint { report: analyze(&state, &input, &t), state, input })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub samples: usize,
    pub observable: f64,
    pub formation_lock: f64,
    pub target_stationary: f64,
    pub zero_baseline: f64,
    pub max_abs_det_formation_lock: f64,
    /// Largest relative gap between the matrix and closed-form determinants.
    pub max_determinant_discrepancy: f64,
}

impl SweepSummary {
    pub fn new(points: &[SweepPoint]) -> Self {
        use relloc_core::RegimeFlags as F;
        let n = points.len().max(1) as f64;
        let frac = |f: F| points.iter().filter(|p| p.report.flags.contains(f)).count() as f64 / n;
        Self {
            samples: points.len(),
            observable: frac(F::OBSERVABLE),
            formation_lock: frac(F::FORMATION_LOCK),
            target_stationary: frac(F::TARGET_STATIONARY),
            zero_baseline: frac(F::ZERO_BASELINE),
            max_abs_det_formation_lock: points
                .iter()
                .filter(|p| p.report.flags.contains(F::FORMATION_LOCK))
                .map(|p| p.report.det.abs())
                .fold(0.0, f64::max),
            max_determinant_discrepancy: points
                .iter()
                .map(|p| p.report.determinant_discrepancy(1e-12))
                .fold(0.0, f64::max),
        }
    }
}
