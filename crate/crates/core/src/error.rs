use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("oracle refused: {0}")]
    OracleRefused(String),

    #[error("policy error: {0}")]
    Policy(String),

    #[error("LP solver error: {0}")]
    Solver(String),

    #[error("detector error: {0}")]
    Detector(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("metric unavailable: {0}")]
    MetricUnavailable(String),

    #[error("bound violation: upper bound {upper} is below lower bound {lower}")]
    BoundViolation { upper: f64, lower: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at(self, iteration: usize) -> Error {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
