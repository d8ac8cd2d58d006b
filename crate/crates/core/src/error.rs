use thiserror::Error;

/// Errors raised by the covariance calculus and everything built on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A scalar parameter is outside its physical or mathematical domain.
    #[error("{what}: got {value}, expected {expected}")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// Structurally invalid arguments (dimension mismatch, index collision, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A numerical precondition failed at evaluation time.
    #[error("numerical domain error: {0}")]
    Numerical(String),

    #[error("no positive key rate at zero excess noise (R = {key_rate})")]
    NoPositiveRate { key_rate: f64 },

    #[error("key rate still positive at the excess-noise cap {cap}")]
    NoiseCapReached { cap: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(what: &'static str, value: f64, expected: &'static str) -> Error {
    Error::Domain {
        what,
        value,
        expected,
    }
}
