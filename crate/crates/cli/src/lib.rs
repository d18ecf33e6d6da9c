//! Command-line front end: configuration loading, experiment orchestration
//! and figure-data output for gaitscope.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};
