use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Evaluation point outside the open domain 0 < x < 1, t > 0, or a
    /// parameter that makes the change-of-variables Jacobian degenerate.
    #[error("domain error: {0}")]
    Domain(String),

    /// A coefficient model of the wrong kind was passed to a density route.
    #[error("wrong model for this route: {0}")]
    WrongModel(String),

    /// A conditional or covariance block collapsed numerically.
    #[error("degenerate {what} (condition number {cond:.3e})")]
    Degenerate { what: String, cond: f64 },

    /// Singular covariance; carries the reason (e.g. det(Sigma_N)=0).
    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    /// A theorem hypothesis needed by the selected route is violated.
    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    /// A model construction was rejected.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// No sampler is registered for a law (Monte Carlo paths only).
    #[error("unsupported law: {0}")]
    UnsupportedLaw(String),

    /// Quadrature machinery failed to converge internally.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
