use thiserror::Error;

/// Errors raised by the simulation, solver and valuation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("path {path}: {source}")]
    Path {
        path: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("variance undefined for {n_paths} path(s); need at least 2")]
    VarianceUndefined { n_paths: usize },

    #[error("step {step} was not recorded in the ensemble")]
    StepNotRecorded { step: usize },

    #[error("stability violation: dt = {dt:e} exceeds the bound {max_dt:e}")]
    Stability { dt: f64, max_dt: f64 },

    #[error("scheme error: {0}")]
    Scheme(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("too few paths: {n_paths} (minimum {min})")]
    TooFewPaths { n_paths: usize, min: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be > 0, got {value}"),
        })
    }
}

pub(crate) fn ensure_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be >= 0, got {value}"),
        })
    }
}
