use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate CDF slope (b = 0)")]
    DegenerateSlope,

    #[error("variance collapse: computed variance {variance:e} is below the floor {floor:e}")]
    VarianceCollapse { variance: f64, floor: f64 },

    #[error("operation requires rho = 0, got {0}")]
    NonzeroCorrelation(f64),

    #[error("singular geometry: |sigma_b - rho * sigma_a| = {0:e} is below the floor")]
    SingularGeometry(f64),

    #[error("improper max prior: {0}")]
    ImproperPrior(&'static str),

    #[error("degenerate reweighting: effective sample size {ess:.1} is below {min}")]
    DegenerateReweighting { ess: f64, min: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
