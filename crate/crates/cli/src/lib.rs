//! Configuration ingestion and output for the `inertial` command.

pub mod config;
pub mod output;

pub use config::{emit_config, parse_config, parse_config_str, ConfigError, RunConfig};
pub use output::{emit_for_spec, run_and_emit};
