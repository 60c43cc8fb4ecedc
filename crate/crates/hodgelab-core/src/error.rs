use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("top degree: d is not defined on {0}-cochains of an {0}-dimensional complex")]
    TopDegree(usize),
    #[error("non-elliptic metric: {0}")]
    NonElliptic(String),
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("precondition violated: {what} (measured defect {defect:e})")]
    Precondition { what: String, defect: f64 },
    #[error("compatibility violated: harmonic pairings {pairings:?} exceed {bound:e}")]
    Compatibility { pairings: Vec<f64>, bound: f64 },
    #[error("no convergence after {iterations} iterations (last residual {last:e})")]
    NotConverged { iterations: usize, last: f64, history: Vec<f64> },
    #[error("ambiguous harmonic rank: eigenvalues {eigenvalues:?}, threshold {threshold:e}")]
    AmbiguousRank { eigenvalues: Vec<f64>, threshold: f64 },
    #[error("line search failed at iteration {iteration} (energy {energy:e})")]
    LineSearch { iteration: usize, energy: f64, history: Vec<f64> },
    #[error("not a contraction: estimated norm {0}")]
    NotContraction(f64),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
