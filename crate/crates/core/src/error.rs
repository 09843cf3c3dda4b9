use thiserror::Error;

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    /// A trace or config line that is not valid JSON or misses required fields.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record that parsed but breaks a data invariant (strict loading).
    #[error("{message} at line {line}")]
    Validation {
        line: usize,
        field: String,
        message: String,
    },

    /// Caller supplied an argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Input data that cannot support the requested computation.
    #[error("data error: {0}")]
    Data(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("cooling rate is unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    /// A metric's declared input set does not match what it reads.
    #[error("declaration error: {0}")]
    Declaration(String),

    #[error("io error: {0}")]
    Io(String),
}

impl MetricsError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        MetricsError::Argument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        MetricsError::Data(msg.into())
    }

    /// True for errors caused by how the caller invoked an operation rather
    /// than by the data it was given.
    pub fn is_argument_error(&self) -> bool {
        matches!(self, MetricsError::Argument(_))
    }
}

impl From<std::io::Error> for MetricsError {
    fn from(e: std::io::Error) -> Self {
        MetricsError::Io(e.to_string())
    }
}
