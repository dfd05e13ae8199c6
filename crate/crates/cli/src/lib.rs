//! Configuration, output formats and subcommand runners for the
//! `micromaser` binary.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },

    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error(transparent)]
    Simulation(#[from] micromaser_core::Error),

    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },

    #[error("only {converged} of {total} sweep points converged")]
    SweepIncomplete { converged: usize, total: usize },
}

impl CliError {
    /// 2 for bad input, 1 for failures during or after the computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Invalid(_) => 2,
            _ => 1,
        }
    }
}
