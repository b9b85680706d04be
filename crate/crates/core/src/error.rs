use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("symbol {symbol} out of range 1..={d}")]
    SymbolOutOfRange { symbol: usize, d: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("eigenvalue 1 not simple, multiplicity {multiplicity}")]
    EigenvalueNotSimple { multiplicity: usize },

    /// The reachable block of `symbol` lies inside `ker e^T`, so no basis of it
    /// can be normalized to unit column sums.
    #[error("reachable block for symbol {symbol} lies in ker e^T; unit column sums impossible")]
    AssumptionViolated { symbol: usize },

    #[error("{identity} residual {residual:e} exceeds tolerance {tolerance:e}")]
    ReductionInconsistent {
        identity: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("subspace closure did not stabilize within {0} iterations")]
    ClosureDiverged(usize),

    #[error("dense storage needs {required} bytes, budget is {budget} bytes")]
    SizeExceeded { required: u128, budget: u128 },

    #[error("path of length {length} too short for windows of length {window}")]
    PathTooShort { length: usize, window: usize },

    #[error("model is not a proper HMM: {0}")]
    NotProper(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
