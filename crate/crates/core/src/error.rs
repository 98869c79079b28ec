use std::path::PathBuf;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("action component {value} outside [-1, 1]")]
    InvalidAction { value: f64 },

    #[error("invalid vehicle model: {0}")]
    InvalidModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pool digest mismatch: file built for {found}, expected {expected}")]
    DigestMismatch { expected: String, found: String },

    #[error("corrupt record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },

    #[error("pool has no scenario with {n_obst} obstacle(s) and CR in [{lo}, {hi}]")]
    EmptyCell { lo: f64, hi: f64, n_obst: usize },

    #[error("scenario has {got} obstacles but the observation only has {slots} slots")]
    SlotOverflow { got: usize, slots: usize },

    #[error("step called on a finished episode")]
    StepAfterDone,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    /// True for errors caused by bad or mismatched input data rather than configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::DigestMismatch { .. } | Error::CorruptRecord { .. } | Error::EmptyCell { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
