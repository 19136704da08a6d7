use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("adaptive quadrature did not converge: {0}")]
    NonConvergent(String),
    #[error("relative tolerance {0} outside (1e-14, 1e-2)")]
    InvalidTolerance(f64),
    #[error("unsupported half-line moment exponent {0}")]
    UnsupportedExponent(f64),
    #[error("need at least {needed} samples inside the fit window, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("sample value {0} is not positive")]
    NonPositiveValue(f64),
    #[error("points are light-like separated (|t^2 - r^2| = {0:e})")]
    SingularSeparation(f64),
    #[error("energy {0} must be positive")]
    NonPositiveEnergy(f64),
    #[error("invalid mass configuration: {0}")]
    InvalidMass(String),
    #[error("divided-difference stencil ill-conditioned: {0}")]
    StencilIllConditioned(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("combinatorial budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("degenerate mode: omega_p = omega_k = {0}")]
    DegenerateMode(f64),
    #[error("potential is not transversal: q.A(q) = {0:e}")]
    NonTransversalPotential(f64),
    #[error("M^2 = {m2} is below the two-particle threshold {threshold}")]
    BelowThreshold { m2: f64, threshold: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
