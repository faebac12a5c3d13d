use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] tabal_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Service(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        use tabal_core::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(E::Validation(_) | E::EmptyCell(_) | E::UnknownCell(_)) => "validation",
            CliError::Core(E::Config(_)) => "config",
            CliError::Core(E::Parse { .. } | E::Json(_) | E::Csv(_)) => "parse",
            CliError::Core(E::Divergence { .. }) => "training",
            CliError::Core(E::Io { .. }) | CliError::Io { .. } => "io",
            CliError::Service(_) => "service",
        }
    }

    /// Usage and configuration problems exit with 2, everything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" | "config" => 2,
            _ => 1,
        }
    }

    /// One-line JSON diagnostic for stderr.
    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

pub type CliResult<T> = Result<T, CliError>;
