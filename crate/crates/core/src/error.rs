use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rows of A are not orthonormal (max |AAᵀ - I| = {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },
    #[error("point lies outside the domain of {what} (violation {violation:.3e})")]
    DomainViolation { what: &'static str, violation: f64 },
    #[error("{boundary} boundary coordinates exceed the enumeration cap {cap}")]
    EnumerationCap { boundary: usize, cap: usize },
    #[error("{0} has no smooth structure (value/gradient/Hessian unavailable)")]
    NoSmoothStructure(&'static str),
    #[error("{0} has no proximal operator in the catalog")]
    NoProx(&'static str),
    #[error("proximal operator of {0} is not differentiable at the probe point")]
    NonDifferentiable(&'static str),
    #[error("step size {t} violates t < 1/λ_max = {limit}")]
    StepTooLarge { t: f64, limit: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("candidate is not stationary: residual {residual:.3e} exceeds {tol:.1e}")]
    NotStationary { residual: f64, tol: f64 },
    #[error("quantity undefined at an exact root (‖F(x)‖ = 0)")]
    UndefinedAtRoot,
    #[error("unsupported instance: {0}")]
    UnsupportedInstance(String),
    #[error("instance format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
