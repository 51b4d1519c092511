use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid beam weights: {0}")]
    InvalidWeights(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("slot index {index} out of range 1..={slots}")]
    SlotOutOfRange { index: usize, slots: usize },

    #[error("config key `{key}`: {message}")]
    Parse { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the user's configuration rather than runtime failures.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::Parse { .. } | Error::SlotOutOfRange { .. } | Error::Json(_)
        )
    }
}
