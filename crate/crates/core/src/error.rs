use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite {what} at q = {at:?}")]
    NonFinite { what: &'static str, at: Vec<f64> },

    #[error("matrix is not symmetric positive-definite ({context})")]
    NotPositiveDefinite { context: String },

    #[error("invalid construction: {0}")]
    Construction(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("integrator diverged at step {step}: {detail}")]
    Divergent { step: usize, detail: String },

    #[error("fixed-point iteration did not converge in {iters} iterations (residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("bracket [{lo}, {hi}] does not capture the conditional distribution")]
    Bracket { lo: f64, hi: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    Argument(String),
}

impl Error {
    /// True for failures that originate in floating-point blow-up rather
    /// than misuse of the API.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::Divergent { .. }
                | Error::NonConvergence { .. }
        )
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
