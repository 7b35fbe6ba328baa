//! File formats, thread-pool execution and the experiment pipeline behind the
//! `fredholm` command-line tool.

pub mod config;
pub mod error;
pub mod export;
pub mod parallel;
pub mod pipeline;
pub mod studies;

pub use config::{ExperimentConfig, Mode};
pub use error::CliError;
pub use parallel::Pool;
pub use pipeline::{run, RunSummary};
