//! The `wearlog` command: configuration, stage wiring, and exit codes.

pub mod app;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

pub use app::{main_with, run, write_fixture};
pub use config::{ConfigError, Needs, PipelineConfig, RawConfig};
pub use error::CliError;
pub use pipeline::Summary;
