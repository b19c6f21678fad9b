use thiserror::Error;

use crate::survival::MlpSurvivalModel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, shapes or cutoffs.
    #[error("configuration error: {0}")]
    Config(String),

    /// The input data cannot support the requested computation.
    #[error("data error: {0}")]
    Data(String),

    #[error("no beats found")]
    NoBeats,

    /// Location parameter is not identifiable (e.g. every sample censored).
    #[error("non-identifiable model: {0}")]
    NonIdentifiable(String),

    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("feature columns do not match the model: {0}")]
    FeatureMismatch(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Loss became non-finite; carries the last model whose loss was finite.
    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        last_good: Box<MlpSurvivalModel>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
