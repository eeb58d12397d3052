use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants mirror the rejection cases of the
/// public operations; messages are meant to be actionable as-is.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at {layer}: expected {expected}, got {actual}")]
    ShapeMismatch {
        layer: String,
        expected: String,
        actual: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    #[error("learning rate collapsed")]
    LearningRateCollapsed,

    #[error("not an IDX file: {0}")]
    NotIdx(String),

    #[error("label/image count differ: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("unexpected EOF in {0}")]
    UnexpectedEof(String),

    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("class overlap: {0}")]
    ClassOverlap(String),

    #[error("checkpoint parse error at line {line}: {message}")]
    Checkpoint { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
