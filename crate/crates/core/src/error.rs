use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Objects from different groups, wrong dimensions, or malformed algebraic data.
    #[error("structural error: {0}")]
    Structural(String),
    /// Input outside the domain of a chart or a map.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(
        "{context}: no convergence after {iterations} iterations (last residual {residual:e})"
    )]
    Convergence {
        context: String,
        iterations: usize,
        residual: f64,
    },
    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },
    /// A standing hypothesis of a construction does not hold for the given data.
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
