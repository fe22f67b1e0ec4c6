//! The `absa` command line: validate, stats, train, evaluate, compare,
//! gridsearch and synth.
//!
//! Exit statuses are 0 on success, 1 on a data or model error and 2 on a
//! usage error. Every artifact written records the resolved [`RunConfig`]
//! and the SHA-256 of the input dataset; CSV artifacts carry them as `#`
//! comment lines above the header.

pub mod app;
pub mod artifacts;
pub mod commands;
pub mod config;
pub mod pipeline;

pub use commands::{
    cmd_compare, cmd_evaluate, cmd_gridsearch, cmd_stats, cmd_synth, cmd_train, cmd_validate, CompareRow,
    CompareTable, GridOutcome, StatsOutcome, TrainOutcome,
};
pub use config::{ModelKind, Overrides, RunConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{stage}: {message}")]
    Domain { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain { .. } => 1,
        }
    }
}

/// Wraps an error from a named pipeline stage.
pub fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Domain {
        stage,
        message: e.to_string(),
    }
}
