use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad input: parameters, mesh layout, shapes, ranges.
    #[error("validation error: {0}")]
    Validation(String),

    /// A numerical method did not reach its target.
    #[error("solver failure: {what} (residual {residual:.3e})")]
    Solver { what: String, residual: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn solver(what: impl Into<String>, residual: f64) -> Self {
        Error::Solver {
            what: what.into(),
            residual,
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Format(_))
    }
}
