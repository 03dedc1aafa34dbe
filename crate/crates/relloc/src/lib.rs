//! Std companion to `relloc-core`: scenario files, run artifacts, parallel
//! studies and the `relloc` command line.
pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod studies;

pub use error::{Error, Result};
