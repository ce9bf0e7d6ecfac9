use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot parse url `{0}`")]
    Url(String),

    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("optimizer did not converge after {iterations} iterations; trace: {trace:?}")]
    NonConvergence { iterations: usize, trace: Vec<(f64, f64)> },

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("missing upstream artifact `{artifact}`; run the `{stage}` stage first")]
    MissingStage { stage: String, artifact: PathBuf },

    #[error("artifact {artifact} was produced with config hash {found}, current config hash is {expected}")]
    ConfigHashMismatch {
        artifact: PathBuf,
        expected: String,
        found: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Errors caused by bad data rather than bad usage map to exit code 2.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_))
    }
}
