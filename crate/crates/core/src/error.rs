use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter domain violated: {0}")]
    DomainViolation(String),
    #[error("delta = (p-1-alpha)(p-1-beta) - m*q vanishes (|delta| = {0:e}); the homogeneity exponents are undefined")]
    DeltaZero(f64),
    #[error("operation requires the blow-up regime (delta < 0, alpha0 > 0); got delta = {delta}")]
    RegimeMismatch { delta: f64 },
    #[error("series start radius {epsilon:e} too large: remainder estimate {remainder:e} exceeds {limit:e}")]
    EpsilonTooLarge {
        epsilon: f64,
        remainder: f64,
        limit: f64,
    },
    #[error("asymptotic constants out of f64 range: ln lambda = {ln_lambda}, ln mu = {ln_mu}")]
    ConstantsOutOfRange { ln_lambda: f64, ln_mu: f64 },
    #[error("radial right-hand side evaluated at r = {0} <= 0")]
    SingularRadius(f64),
    #[error("state leaves the admissible set: {0}")]
    InvalidState(String),
    #[error("integration step failed at {at}: {reason}")]
    StepFailure { at: f64, reason: String },
    #[error("no blow-up within budget: {0}")]
    NoBlowupWithinBudget(String),
    #[error("tail too short: {found} samples above 0.01*threshold, need at least {needed}")]
    TailTooShort { found: usize, needed: usize },
    #[error("solution has not blown up")]
    NotBlownUp,
    #[error("non-autonomous right-hand side evaluated at t = {0} <= 0")]
    SingularTime(f64),
    #[error("Newton sweep converged to an unexpected equilibrium ({0}, {1}, {2})")]
    UnexpectedEquilibrium(f64, f64, f64),
    #[error("g is not differentiable at ({0}, {1}, {2})")]
    NonDifferentiablePoint(f64, f64, f64),
    #[error("spectral computation failed: {0}")]
    SpectralFailure(String),
    #[error("solution is not normalized to unit blow-up radius (R_hat = {0})")]
    NotNormalized(f64),
    #[error("insufficient tail: {found} samples in the fit window, need at least {needed}")]
    InsufficientTail { found: usize, needed: usize },
    #[error("profile never stays within {tol:e} of (1,1,1); last distance {last_distance:e}")]
    NoConvergenceWithinRange { tol: f64, last_distance: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
