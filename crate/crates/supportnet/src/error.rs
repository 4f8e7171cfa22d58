use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layer {layer}: expected input width {expected}, got {got}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("layer {layer}: pool needs an even input width, got {got}")]
    OddPoolWidth { layer: usize, got: usize },
    #[error("{what} must be a power of two, got {got}")]
    NotPowerOfTwo { what: &'static str, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operation requires relu/identity activations only, found {0}")]
    AnalyticActivation(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("parse error at {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn parse(path: impl Into<String>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}
