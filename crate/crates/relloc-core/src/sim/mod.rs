//! Closed-loop multi-robot simulation.
pub mod config;
pub mod control;
pub mod metrics;
pub mod startup;
pub mod study;
pub mod truth;
pub mod world;

pub use config::{PhaseKind, ScenarioConfig};
pub use world::{SimError, World};
