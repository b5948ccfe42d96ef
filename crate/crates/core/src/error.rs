use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("field order {0} is not prime")]
    NotPrime(u32),
    #[error("value {value} is not an element of F_{q}")]
    OutOfField { value: u32, q: u32 },
    #[error("cannot combine elements of F_{left} and F_{right}")]
    FieldMismatch { left: u32, right: u32 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("{family} graphs need at least {min} vertices, got {n}")]
    FamilyTooSmall { family: &'static str, n: usize, min: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("multiplicity must be at least 1, got {0}")]
    InvalidMultiplicity(usize),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown target {0}")]
    UnknownTarget(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("server {server} cannot evaluate {symbol}: not stored locally")]
    NonLocalSymbol { server: usize, symbol: String },
    #[error("decoding failed: {0}")]
    DecodeFailure(String),
    #[error("symmetric retrieval property violated: {0}")]
    SrpViolation(String),
    #[error("coin domain is not enumerable: {0}")]
    NotEnumerable(String),
    #[error("state space of {states} exceeds the budget of {budget}; use the linear engine")]
    BudgetExceeded { states: String, budget: u128 },
    #[error("message length L' = {0} is odd")]
    OddLength(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
}
