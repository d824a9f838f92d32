//! Configuration, experiment runners and reports for the `otlimit` command.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use experiment::run;
pub use report::{ExperimentReport, ReportRow};
