use thiserror::Error;

/// Errors raised by the library. Each variant maps onto a stable CLI exit code.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),
    /// The requested computation exceeds an enumeration cap.
    #[error("scale error: {0}")]
    Scale(String),
    /// The graph is not the middle-layers graph B(2d-1, d).
    #[error("shape error: {0}")]
    Shape(String),
    /// The inputs fall outside the regime where an exact answer is defined.
    #[error("regime error: {0}")]
    Regime(String),
    #[error("cache error: {0}")]
    Cache(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Scale(_) => "scale",
            Error::Shape(_) => "shape",
            Error::Regime(_) => "regime",
            Error::Cache(_) => "cache",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
