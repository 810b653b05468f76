use thiserror::Error;

/// Errors raised by the numerical layers.
///
/// Validation errors describe bad inputs; certification errors describe a
/// numerical result that could not be trusted at the chosen truncation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("truncation: {0}")]
    Truncation(String),
    #[error("no stabilizing crossing: {0}")]
    NoCrossing(String),
    #[error("support violation: {0}")]
    Support(String),
    #[error("convergence: {0}")]
    Convergence(String),
    #[error("linear algebra: {0}")]
    Linalg(String),
}

impl Error {
    /// True for failures of numerical certification rather than input validation.
    pub fn is_certification(&self) -> bool {
        matches!(self, Error::Truncation(_) | Error::Convergence(_) | Error::Linalg(_))
    }
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
