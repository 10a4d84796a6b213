//! Experiment runner: config-driven training sweeps, aggregation, analysis
//! of the best models, and figure output.

pub mod analyze;
pub mod config;
pub mod error;
pub mod plot;
pub mod summary;
pub mod sweep;

pub use config::{ExperimentConfig, TaskKind};
pub use error::{CliError, Result};
pub use sweep::{run_sweep, SweepReport};
