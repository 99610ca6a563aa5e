use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate id {0}")]
    DuplicateId(usize),
    #[error("factor {factor}: scope references variable {variable} which is out of range or repeated")]
    ScopeOutOfRange { factor: usize, variable: usize },
    #[error("factor {factor}: table has {actual} entries, scope requires {expected}")]
    TableSizeMismatch {
        factor: usize,
        expected: usize,
        actual: usize,
    },
    #[error("factor {0}: table contains NaN or +inf")]
    NaNPotential(usize),
    #[error("variable {variable}: cardinality {cardinality} must be at least 2")]
    InvalidCardinality { variable: usize, cardinality: usize },
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("every configuration has zero weight")]
    AllConfigurationsForbidden,
    #[error("search space of {0} configurations exceeds the enumeration cap")]
    TooLargeToEnumerate(u128),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("integer overflow computing {0}")]
    Overflow(String),
    #[error("every member of the Hamming ball has zero weight")]
    EmptyBall,
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
