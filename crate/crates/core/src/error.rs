use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected {expected} entries, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("channel mismatch: expected {expected} channels, found {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("spatial size mismatch: {left} vs {right}")]
    SpatialMismatch { left: usize, right: usize },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error(
        "dense materialization of a {rows}x{cols} matrix exceeds the cap of {cap} entries; \
         use the implicit Gram operator instead"
    )]
    DenseCapExceeded {
        rows: usize,
        cols: usize,
        cap: usize,
    },

    #[error("operator dimension {0} is too small for top-2 tracking (need at least 2)")]
    DimensionTooSmall(usize),

    #[error("matrix is not symmetric (max relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("{method} did not converge within {iterations} iterations")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
    },

    #[error("{0} contains non-finite entries")]
    NonFiniteInput(&'static str),

    #[error("non-finite kernel entry produced at descent iteration {iter}")]
    NonFinite { iter: usize },

    #[error("bound parameter t must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("expected {expected} values, found {found}")]
    ValueCount { expected: usize, found: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
