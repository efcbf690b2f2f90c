use std::path::PathBuf;

use serde_json::json;
use sibvp::{BoundsError, BvpError, IvpError, OracleError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Bvp(#[from] BvpError),
    #[error(transparent)]
    Ivp(#[from] IvpError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration errors, 3 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Bvp(_) | CliError::Ivp(_) | CliError::Bounds(_) | CliError::Oracle(_) => "solver",
            CliError::Io { .. } | CliError::Csv(_) | CliError::Json(_) => "output",
        }
    }

    /// `{"error": {"kind": ..., "exit_code": ..., "message": ...}}`
    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}
