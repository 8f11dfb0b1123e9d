use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("region ({x}, {y}, {w}x{h}) out of bounds for {width}x{height}")]
    RegionOutOfBounds {
        x: i64,
        y: i64,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },

    #[error("invalid pyramid level {level} (slide has {available})")]
    InvalidLevel { level: usize, available: usize },

    #[error("slide {0} has no QC-passing tiles")]
    EmptySlide(String),

    #[error("patient {0} has no slide scores")]
    EmptyPatient(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("bootstrap degenerate: {valid} valid resamples after {attempts} attempts")]
    DegenerateBootstrap { valid: usize, attempts: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("artifact hash mismatch: {0}")]
    HashMismatch(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 data/validation, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::DegenerateBootstrap { .. } => 3,
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
