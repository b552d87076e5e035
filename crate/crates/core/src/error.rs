use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("p = {0} is outside the open interval (0, 1)")]
    InvalidProbability(f64),

    #[error("kappa(0) is undefined")]
    KappaOfZero,

    #[error("column index must be at least 1")]
    ZeroColumn,

    #[error("index arithmetic overflows 64 bits (k = {k}, n = {n})")]
    IndexOverflow { k: u64, n: u64 },

    #[error("calB(k, l, n) requires n <= l (got l = {l}, n = {n})")]
    LagBeyondRow { l: u64, n: u64 },

    #[error("row length must be positive")]
    EmptyRow,

    #[error("row length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("row index {k} outside [-{kmax}, {kmax}]")]
    RowOutOfRange { k: i64, kmax: usize },

    #[error("column {col} outside [1, {len}]")]
    ColumnOutOfRange { col: usize, len: usize },

    #[error("K = {0} is too large for a 64-bit chain state")]
    StateTooWide(usize),

    #[error("state space of {states} states exceeds the cap of {cap}")]
    StateCapExceeded { states: usize, cap: usize },

    #[error("series for Sigma({k},{k}) did not reach tolerance within {terms} terms")]
    NonConvergence { k: i64, terms: u64 },

    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),

    #[error("coefficient vector has length {got}, expected {expected}")]
    CoefLength { expected: usize, got: usize },

    #[error("grid point {0} outside [0, 1]")]
    GridOutOfRange(f64),

    #[error("time grid must be sorted and non-empty")]
    UnsortedGrid,

    #[error("no snapshot recorded at t = {0}")]
    MissingSnapshot(f64),

    #[error("at least {needed} trials are required, got {got}")]
    TooFewTrials { needed: usize, got: usize },

    #[error("component set must be non-empty")]
    EmptyComponents,

    #[error("enumeration length n = {0} outside [1, 20]")]
    EnumerationTooLarge(usize),

    #[error("csv parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
