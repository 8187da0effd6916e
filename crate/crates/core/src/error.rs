use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A saturation function failed validation or produced non-finite values.
    #[error("invalid saturation function: {0}")]
    InvalidFunction(String),

    /// Adaptive quadrature hit its depth limit before meeting the tolerance.
    #[error("quadrature did not converge: requested {requested:e}, achieved {achieved:e}")]
    Quadrature { requested: f64, achieved: f64 },

    /// The control vector `b₂` vanishes, so `(J₂(ω), b)` is not controllable.
    #[error("pair (J2(omega), b) is not controllable: b2 = 0")]
    NotControllable,

    /// Wrong state shape or coordinate tag, too few samples, and similar misuse.
    #[error("usage error: {0}")]
    Usage(String),

    /// A requested time lies outside the span covered by a trajectory.
    #[error("time {t} outside trajectory span [{start}, {end}]")]
    Range { t: f64, start: f64, end: f64 },

    /// A checker precondition does not hold for the given input.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// The integrated state left the finite region (norm above 1e12).
    #[error("integration diverged after t = {last_valid_time}")]
    Divergence { last_valid_time: f64 },

    /// Malformed or inconsistent run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
