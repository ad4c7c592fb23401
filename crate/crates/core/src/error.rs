use std::path::PathBuf;

use thiserror::Error;

use crate::gateway::GatewayError;
use crate::sandbox::SandboxError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: file not found", .path.display())]
    NotFound { path: PathBuf },

    #[error("{}:{line}: {message}", .path.display())]
    Malformed { path: PathBuf, line: usize, message: String },

    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid problem {id}: {}", .violations.join("; "))]
    InvalidProblem { id: String, violations: Vec<String> },

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error(transparent)]
    Sandbox(#[from] SandboxError),

    #[error("response parse error: {0}")]
    ResponseParse(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("no eligible seeds for {strategy}")]
    NoEligibleSeeds { strategy: String },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("tagging failed: {0}")]
    Tagging(String),

    #[error("no trusted baseline: {0}")]
    NoTrustedBaseline(String),

    #[error("insufficient pool for {id}: {n} solvers, need {n_min}")]
    InsufficientPool { id: String, n: usize, n_min: usize },

    #[error("{stage} failed for {problem_id}: {source}")]
    Stage {
        stage: &'static str,
        problem_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound { path }
        } else {
            Error::Io { path, source }
        }
    }

    /// Errors that must stop a whole run instead of parking a single problem.
    pub fn is_fatal(&self) -> bool {
        match self {
            Error::Gateway(e) => e.is_fatal(),
            Error::Sandbox(e) => e.is_fatal(),
            Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_fatal(),
            _ => false,
        }
    }
}
