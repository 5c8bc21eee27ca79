//! Crate-wide error type.

/// Errors raised by fitting, evaluation, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter lies outside its family's admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller violated an interface contract (bad lengths, missing
    /// columns, out-of-range inputs).
    #[error("usage error: {0}")]
    Usage(String),

    /// An iterative routine failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The data cannot support the requested fit (constant column, all
    /// mass on a boundary).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Too few observations for the requested estimator.
    #[error("insufficient data: need at least {need}, got {got}")]
    Insufficient { need: usize, got: usize },

    /// The requested operation is not defined for this configuration.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The edge list contains a cycle.
    #[error("cycle detected: graph contains a cycle through edge {parent} -> {child}")]
    Cycle { parent: String, child: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
