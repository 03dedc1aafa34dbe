//! Scenario files.
//!
//! A scenario file is TOML holding any subset of [`ScenarioConfig`]. Keys
//! the file leaves out come from the preset of the subcommand (the
//! two-robot study setup, the five-robot formation or the leader-follower
//! pass). Tables merge key by key; arrays and scalars replace.
use std::fmt;
use std::path::Path;

use relloc_core::sim::config::ConfigError as Invalid;
use relloc_core::sim::ScenarioConfig;
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Default,
    Formation,
    LeaderFollower,
}

impl Preset {
    pub fn config(self) -> ScenarioConfig {
        match self {
            Preset::Default => ScenarioConfig::default(),
            Preset::Formation => ScenarioConfig::formation(),
            Preset::LeaderFollower => ScenarioConfig::leader_follower(),
        }
    }
}

/// Config problem, anchored to a source position when one is known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    /// 1-based line and column.
    pub position: Option<(usize, usize)>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some((line, col)) => write!(f, "{}:{line}:{col}: {}", self.origin, self.message),
            None => write!(f, "{}: {}", self.origin, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn new(origin: &str, message: impl Into<String>) -> Self {
        Self { origin: origin.to_owned(), position: None, message: message.into() }
    }

    pub(crate) fn from_toml(origin: &str, text: &str, e: &toml::de::Error) -> Self {
        Self {
            origin: origin.to_owned(),
            position: e.span().map(|s| line_col(text, s.start)),
            message: e.message().trim_end().to_owned(),
        }
    }
}

pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |k| before.len() - k - 1) + 1;
    (line, col)
}

/// Reads and resolves a scenario file over `preset`; `None` gives the preset.
pub fn load_scenario(path: Option<&Path>, preset: Preset) -> Result<ScenarioConfig, ConfigError> {
    let Some(path) = path else {
        return Ok(preset.config());
    };
    let origin = path.display().to_string();
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError::new(&origin, format!("cannot read file: {e}")))?;
    parse_scenario(&text, &origin, preset)
}

pub fn parse_scenario(text: &str, origin: &str, preset: Preset) -> Result<ScenarioConfig, ConfigError> {
    // Deserializing the user text on its own first gives span-anchored errors
    // for syntax, types and unknown keys.
    toml::from_str::<ScenarioConfig>(text).map_err(|e| ConfigError::from_toml(origin, text, &e))?;
    let user: Table = text.parse().map_err(|e| ConfigError::from_toml(origin, text, &e))?;
    let mut merged = Table::try_from(preset.config()).expect("presets serialize");
    merge(&mut merged, user);
    let cfg: ScenarioConfig =
        Value::Table(merged).try_into().map_err(|e: toml::de::Error| ConfigError::new(origin, e.message()))?;
    cfg.validate().map_err(|Invalid::Invalid { field, reason }| ConfigError {
        origin: origin.to_owned(),
        position: locate_key(text, field),
        message: format!("invalid `{field}`: {reason}"),
    })?;
    Ok(cfg)
}

/// Recursive table merge; `over` wins.
pub fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Line and column of the dotted key `field` in `text`, found by walking
/// table headers. Falls back to the innermost table header that exists.
pub fn locate_key(text: &str, field: &str) -> Option<(usize, usize)> {
    let target: Vec<&str> = field.split('.').collect();
    let mut table: Vec<String> = Vec::new();
    let mut header_hit: Option<(usize, usize, usize)> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let trimmed = line.trim_start();
        let indent = line.len() - trimmed.len();
        let trimmed = trimmed.trim_end();
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name.trim_start_matches('[').trim_end_matches(']');
            table = split_key(name);
            let depth = common_prefix(&table, &target);
            if depth == table.len() && header_hit.is_none_or(|(d, ..)| depth > d) {
                header_hit = Some((depth, n + 1, indent + 1));
            }
            continue;
        }
        let Some((key, _)) = trimmed.split_once('=') else { continue };
        let mut path = table.clone();
        path.extend(split_key(key));
        if path == target {
            return Some((n + 1, indent + 1));
        }
    }
    header_hit.filter(|(d, ..)| *d > 0).map(|(_, l, c)| (l, c))
}

fn split_key(key: &str) -> Vec<String> {
    key.split('.').map(|p| p.trim().trim_matches('"').to_owned()).filter(|p| !p.is_empty()).collect()
}

fn common_prefix(a: &[String], b: &[&str]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == *y).count()
}

/// Fully resolved config as TOML, for the run directory.
pub fn to_toml(cfg: &ScenarioConfig) -> Result<String, toml::ser::Error> {
    toml::to_string(cfg)
}
