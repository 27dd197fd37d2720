use std::fmt;
use std::path::Path;

use lc_core::data::DataError;
use lc_core::model::ModelError;
use lc_core::oracle::OracleError;
use lc_core::trainer::TrainError;

/// Failure classes with stable process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or an invalid configuration.
    Usage(String),
    /// Non-finite loss or another numeric breakdown.
    Numeric(String),
    /// Unreadable, unwritable or malformed files.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Numeric(_) => 3,
            Self::Io(_) => 4,
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Numeric(m) | Self::Io(m) => f.write_str(m),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Ratio(_)
            | DataError::Palette { .. }
            | DataError::Topology(_)
            | DataError::UnsupportedTopology(_)
            | DataError::Param(_) => Self::Usage(e.to_string()),
            _ => Self::Io(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(_) | ModelError::Checkpoint(_) => Self::Io(e.to_string()),
            ModelError::InputWidth { .. } => Self::Usage(e.to_string()),
            _ => Self::Numeric(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::Debias(_) => Self::Usage(e.to_string()),
            TrainError::Io { .. } => Self::Io(e.to_string()),
            TrainError::Model(m) => m.into(),
            _ => Self::Numeric(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        Self::Usage(e.to_string())
    }
}
