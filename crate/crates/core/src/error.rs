use std::path::PathBuf;

use thiserror::Error;

/// Parameter snapshot attached to a training abort so the offending state can
/// be inspected offline.
#[derive(Debug, Clone)]
pub struct AbortSnapshot {
    pub policy_params: Vec<f64>,
    pub value_params: Option<Vec<f64>>,
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("support violation: {0}")]
    Support(String),

    #[error(
        "solver did not converge after {iterations} iterations (last residual {residual:.3e})"
    )]
    Convergence { iterations: usize, residual: f64 },

    /// The solver converged on its own residual but an independent cross-check
    /// disagreed; surfaced instead of silently returning one of the candidates.
    #[error("solver diagnostic: {0}")]
    Diagnostic(String),

    #[error("non-finite {what} at step {step}; training aborted")]
    NonFinite {
        step: usize,
        what: String,
        snapshot: Box<AbortSnapshot>,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: String, found: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable kind tag, used by the CLI error envelope.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::Argument(_) => "argument",
            Error::Support(_) => "support",
            Error::Convergence { .. } => "convergence",
            Error::Diagnostic(_) => "diagnostic",
            Error::NonFinite { .. } => "non_finite",
            Error::Numeric(_) => "numeric",
            Error::DegenerateData(_) => "degenerate_data",
            Error::Parse { .. } => "parse",
            Error::SchemaVersion { .. } => "schema_version",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
