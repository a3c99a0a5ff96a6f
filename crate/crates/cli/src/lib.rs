//! Library side of the `gdt` command: experiment configuration, report
//! formats, and the verification, hierarchy and training drivers the
//! subcommands (and the acceptance run) share.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod hierarchy;
pub mod report;
pub mod suites;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use report::{Check, Format, Report};
