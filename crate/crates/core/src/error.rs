use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),

    #[error("invalid interval [{a},{b}]: lower bound exceeds upper bound")]
    InvalidInterval { a: usize, b: usize },

    #[error("{kind} expects {expected} operand(s), got {got}")]
    Arity {
        kind: &'static str,
        expected: String,
        got: usize,
    },

    #[error("node {node}: weight vector has length {got}, operator input has length {expected}")]
    WeightLength {
        node: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid smoothing parameters: {0}")]
    InvalidParams(String),

    #[error("node {node} has no smoothing parameters assigned")]
    MissingParams { node: usize },

    #[error("node {node} needs time step {step}, signal covers steps 1..={horizon}")]
    Horizon {
        node: usize,
        step: usize,
        horizon: usize,
    },

    #[error("predicate id {0} is not registered")]
    MissingPredicate(usize),

    #[error("signal: {0}")]
    Signal(String),

    #[error("gradients are not available for {0} semantics")]
    NoGradient(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("integration diverged on interval starting at node {node}")]
    Divergence { node: usize },

    #[error("json: {0}")]
    Json(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
