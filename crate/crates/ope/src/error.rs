use std::path::PathBuf;

use thiserror::Error;

/// Errors of the file-facing layer. Every variant maps to one process exit code.
#[derive(Debug, Error)]
pub enum OpeError {
    #[error(transparent)]
    Core(#[from] ope_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{path}: missing columns {missing:?}")]
    Schema { path: PathBuf, missing: Vec<String> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: expected a {expected} model (version {version}), found {found}")]
    ModelKind { path: PathBuf, expected: &'static str, version: u32, found: String },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("artifact {path} does not match its manifest hash")]
    Integrity { path: PathBuf },
}

pub type Result<T, E = OpeError> = std::result::Result<T, E>;

impl OpeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OpeError::Io { path: path.into(), source }
    }

    /// 2 configuration, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use ope_core::Error as C;
        match self {
            OpeError::Config(_) | OpeError::ModelKind { .. } => 2,
            OpeError::Core(C::InvalidConfig(_) | C::EmptyGrid | C::NonDifferentiableKernel(_)) => 2,
            OpeError::Core(C::Numeric(_) | C::AllWeightsZero | C::ZeroControl | C::ZeroTruth(_)) => 4,
            _ => 3,
        }
    }

    /// Short machine-readable class name for the structured error report.
    pub fn kind(&self) -> &'static str {
        match self {
            OpeError::Core(_) => "core",
            OpeError::Io { .. } => "io",
            OpeError::Parse { .. } => "parse",
            OpeError::Schema { .. } => "schema",
            OpeError::Config(_) => "config",
            OpeError::ModelKind { .. } => "model_kind",
            OpeError::MissingArtifact(_) => "missing_artifact",
            OpeError::Integrity { .. } => "integrity",
        }
    }
}
