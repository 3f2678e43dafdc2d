use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("jet order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("jet has a zero constant term where a nonzero one is required ({op})")]
    ZeroConstantTerm { op: &'static str },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("integrand returned a non-finite value at (s11, s22) = ({s11:e}, {s22:e})")]
    NonFiniteIntegrand { s11: f64, s22: f64 },

    #[error("no convergence in {op} after {iterations} iterations")]
    NoConvergence { op: &'static str, iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            op: "alpha",
            detail: format!("|alpha| must be < 1, got {alpha}"),
        })
    }
}
