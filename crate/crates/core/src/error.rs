use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("market {market}: {what} has length {found}, expected {expected}")]
    DimensionMismatch {
        market: String,
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{0}")]
    Singular(String),

    #[error("{method} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },
}

impl Error {
    pub(crate) fn dim(market: &str, what: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            market: market.to_string(),
            what,
            expected,
            found,
        }
    }
}
