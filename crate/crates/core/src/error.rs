use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid pins: {0}")]
    InvalidPins(String),

    #[error("vertex {0} is not in the graph")]
    UnknownVertex(usize),

    #[error("instance has {size} vertices, limit is {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A hypothesis of a certified computation does not hold (distinct from the
    /// computation simply returning a negative verdict).
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("envelope check failed: {0}")]
    InvalidEnvelope(String),

    #[error("free boundary requested on a tree truncated at depth {0}")]
    TruncatedFree(usize),

    #[error("bracket for vertex {vertex} has log-width {width:e}, exceeds {eps:e}")]
    Bracket { vertex: usize, width: f64, eps: f64 },

    #[error("unsupported argument: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}
