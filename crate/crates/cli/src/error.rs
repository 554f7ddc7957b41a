use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("cannot parse {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{what} not found at {path}; run `{needs}` first")]
    Missing { what: &'static str, path: PathBuf, needs: &'static str },
    #[error("observation mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Core(#[from] latent_langevin::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 3 for numerical failures, 2 for bad configuration or inputs, 1 for
    /// anything else (unwritable output directory and the like).
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(latent_langevin::Error::Io(_)) => 1,
            CliError::Io { .. } | CliError::Json(_) => 1,
            _ => 2,
        })
    }
}

pub fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Attaches the path to an I/O error.
pub trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| CliError::Io { path: path.into(), source })
    }
}
