use std::path::PathBuf;

use relloc_core::sim::SimError;

use crate::config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    /// A `--assert` check failed; carries one line per failed check.
    #[error("assertion failed:\n  {}", .0.join("\n  "))]
    Assertion(Vec<String>),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing TOML: {0}")]
    Toml(#[from] toml::ser::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// 1 usage or config, 2 failed assertion, 3 internal fault.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Usage(_) | Self::Sim(SimError::Config(_)) => 1,
            Self::Assertion(_) => 2,
            Self::Sim(_) | Self::Io { .. } | Self::Csv(_) | Self::Toml(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
