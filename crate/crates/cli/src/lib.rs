//! Config-driven experiments over `fbsde-core`: training, verification,
//! convergence tables and the plain versus multiscale comparison, with
//! CSV, SVG and checkpoint artifacts.

pub mod artifacts;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod exec;
pub mod plot;

pub use commands::{CliError, ModelSource};
pub use config::RunConfig;
