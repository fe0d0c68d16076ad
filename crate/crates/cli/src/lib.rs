//! Command-line front end for the evade simulator.

pub mod artifacts;
pub mod commands;
pub mod scenario_file;

use std::path::Path;

use evade_core::error::MpcError;
use thiserror::Error;

pub use scenario_file::{apply_lines, emit_scenario, parse_scenario, ConfigError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("run failed: {0}")]
    Run(String),
    #[error("robust setup infeasible: {0}")]
    RobustSetup(MpcError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Run(_) => 2,
            CliError::RobustSetup(_) => 3,
        }
    }
}

impl From<evade_core::Error> for CliError {
    fn from(e: evade_core::Error) -> Self {
        use evade_core::Error as E;
        match e {
            E::Mpc(m @ (MpcError::EmptyTightenedSet(_) | MpcError::GainDesign { .. })) => CliError::RobustSetup(m),
            E::Scenario(msg) => CliError::Config(ConfigError::Invalid {
                source_name: "scenario".into(),
                message: msg,
            }),
            other => CliError::Run(other.to_string()),
        }
    }
}
