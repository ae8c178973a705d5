use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside the effective domain: {0}")]
    Domain(String),

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    /// The horizon is too short for an asymptotic quantity to exist.
    #[error("pre-asymptotic regime: {0}")]
    PreAsymptotic(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Two routes to the same quantity disagreed.
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    /// `true` for errors caused by the caller's input rather than by the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {value}")))
    }
}
