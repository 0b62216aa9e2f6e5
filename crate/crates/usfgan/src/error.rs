use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid argument or analysis parameter.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file (WAV framing, magic bytes, sample format).
    #[error("format error: {0}")]
    Format(String),

    /// Container or checkpoint contents disagree with their manifest.
    #[error("schema error: {0}")]
    Schema(String),

    /// A referenced file does not exist.
    #[error("not found: {0}")]
    NotFound(PathBuf),

    /// Tensor/sequence length mismatch at runtime.
    #[error("shape error: {0}")]
    Shape(String),

    /// Bad data encountered mid-pipeline (e.g. frame-count mismatch).
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure (NaN/Inf loss, divergence).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable process exit code for the CLI: 2 usage/config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Config(_) => 2,
            Error::Numerical(_) => 4,
            _ => 3,
        }
    }
}
