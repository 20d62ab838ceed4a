use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("a periodic mesh needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("edge {index} has non-positive length {length}")]
    DegenerateEdge { index: usize, length: f64 },

    #[error("non-positive pivot {pivot} at row {row}: matrix is not positive definite")]
    NonPositivePivot { row: usize, pivot: f64 },

    #[error("mode index must be >= 1, got {0}")]
    InvalidMode(usize),

    #[error("lattice index out of range: {0}")]
    LatticeIndex(String),

    #[error("path {path} blew up at step {step}")]
    BlowUp { path: usize, step: usize },

    #[error("meshes are not nested: reference {reference} nodes, coarse {coarse} nodes")]
    NonNested { reference: usize, coarse: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
