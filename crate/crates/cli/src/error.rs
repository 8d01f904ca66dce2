use std::fmt;
use std::path::PathBuf;

use coepi_core::analysis::AnalysisError;
use coepi_core::control::ControlError;
use coepi_core::dynamics::ParamsError;
use coepi_core::{DynamicsError, SpectralError};
use serde::Serialize;
use thiserror::Error;

use crate::generator::GenerateError;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Config,
    Numeric,
    Infeasible,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Numeric => 3,
            ErrorKind::Infeasible => 4,
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Config => "config",
            ErrorKind::Numeric => "numeric",
            ErrorKind::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            CliError::Io { .. }
            | CliError::Parse { .. }
            | CliError::Config(_)
            | CliError::Params(_)
            | CliError::Csv(_) => ErrorKind::Config,
            CliError::Spectral(_) => ErrorKind::Numeric,
            CliError::Dynamics(e) => dynamics_kind(e),
            CliError::Analysis(e) => match e {
                AnalysisError::RegimeMismatch { .. } => ErrorKind::Infeasible,
                AnalysisError::NoInfection => ErrorKind::Config,
                AnalysisError::Dynamics(d) => dynamics_kind(d),
                _ => ErrorKind::Numeric,
            },
            CliError::Control(e) => match e {
                ControlError::RegimeMismatch { .. }
                | ControlError::Infeasible(_)
                | ControlError::TooLarge { .. } => ErrorKind::Infeasible,
                ControlError::InvalidPin { .. } | ControlError::PinOutOfRange { .. } => {
                    ErrorKind::Config
                }
                ControlError::Dynamics(d) => dynamics_kind(d),
                ControlError::Spectral(_) | ControlError::ThresholdNotResolved { .. } => {
                    ErrorKind::Numeric
                }
            },
            CliError::Generate(e) => match e {
                GenerateError::RegimeUnreachable { .. } => ErrorKind::Infeasible,
                GenerateError::InvalidSpec(_) => ErrorKind::Config,
            },
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let kind = self.kind();
        ErrorRecord {
            error: ErrorBody {
                kind,
                exit_code: kind.exit_code(),
                message: self.to_string(),
            },
        }
    }
}

fn dynamics_kind(e: &DynamicsError) -> ErrorKind {
    match e {
        DynamicsError::StepTooLarge { .. } | DynamicsError::Spectral(_) => ErrorKind::Numeric,
        DynamicsError::InvalidState(_)
        | DynamicsError::InvalidIntegrator
        | DynamicsError::StubbornOutOfRange(_) => ErrorKind::Config,
    }
}

/// Serialized to stderr (and `error.toml` in the output directory) on failure.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: ErrorBody,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: ErrorKind,
    pub exit_code: i32,
    pub message: String,
}
