use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix {index} is singular (|det| = {det:e})")]
    Singular { index: usize, det: f64 },

    #[error("exterior power degree {k} out of range 0..={dim}")]
    DegreeOutOfRange { k: usize, dim: usize },

    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,

    #[error("enumeration budget exceeded: depth {requested} requested, largest admissible depth is {max_depth}")]
    BudgetExceeded { requested: usize, max_depth: usize },

    #[error("empty word")]
    EmptyWord,

    #[error("symbol {symbol} out of range for alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    #[error("orbit set is empty")]
    EmptyOrbit,

    #[error("subspace orbit exceeded cap {cap}")]
    OrbitOverflow { cap: usize },

    #[error("map {index} is not contractive (largest singular value {norm})")]
    NonContractive { index: usize, norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
