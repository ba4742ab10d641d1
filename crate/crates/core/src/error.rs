use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name}: argument {value} outside the domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("quadrature did not reach tolerance {tol:e} (estimated error {estimate:e})")]
    NonConvergence { tol: f64, estimate: f64 },
    #[error("threshold L = {0} is below the minimum semi-perimeter 2")]
    ThresholdTooSmall(u64),
    #[error("estimated memory {needed} bytes exceeds the cap of {cap} bytes")]
    ResourceCap { needed: u64, cap: u64 },
    #[error("{what} too large for exhaustive enumeration ({size} > {limit})")]
    TooLarge {
        what: &'static str,
        size: u64,
        limit: u64,
    },
    #[error("frame state {0} is not part of this transition table")]
    UnknownFrameState(&'static str),
    #[error("malformed rectangle ({a},{b};{c},{d})")]
    InvalidRectangle { a: i64, b: i64, c: i64, d: i64 },
    #[error("germ ({0},{1}) is not an initially infected site")]
    GermNotInfected(i64, i64),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),
    #[error("non-positive residual {value} at point {index} of the fit")]
    NonPositiveResidual { index: usize, value: f64 },
    #[error("fit did not converge (residual norm {residual:e})")]
    FitNonConvergence { residual: f64 },
    #[error("eigenvalue separation {0:e} is too small for the interpolation bound")]
    RepeatedEigenvalues(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
