use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("too many variables for exact enumeration: {0} (limit {1})")]
    Capacity(usize, usize),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("system is not square: {equations} equations, {variables} variables")]
    NotSquare { equations: usize, variables: usize },
    #[error("degenerate lifting persisted after {0} attempts")]
    DegenerateLifting(usize),
    #[error("integer overflow in {0}")]
    Overflow(&'static str),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("strategy `{0}` does not apply to this system")]
    StrategyNotApplicable(String),
    #[error("{failed} of {total} paths unresolved")]
    TooManyFailures { failed: usize, total: usize },
    #[error("inconsistent beliefs: {0}")]
    Inconsistent(String),
    #[error("no stable fixed point to combine")]
    NoStableFixedPoint,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
