//! Command-line workflows over `evhdr-core` and `evhdr-net`: training,
//! stack generation, fusion, tone mapping, evaluation and the built-in
//! comparisons.
//!
//! Exit codes: 0 success, 2 invalid usage or input, 1 runtime failure.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod scenes;

pub use crate::error::{CliError, CliResult};
