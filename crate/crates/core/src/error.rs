use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("difference-quotient shift of {steps} steps leaves the domain (extent {extent})")]
    ShiftOutOfDomain { steps: usize, extent: usize },

    #[error("sampled ellipticity constant lambda_hat = {lambda_hat} is not positive; model rejected")]
    EllipticityViolated { lambda_hat: f64 },

    #[error("Newton did not converge within {max_iter} iterations (last residual {residual:.3e})")]
    NewtonDiverged { max_iter: usize, residual: f64 },

    #[error("negative curvature detected in line search; constitutive profile is not convex")]
    NotConvex,

    #[error("quadrature failed to reach tolerance {tol:.3e} on [{a}, {b}]")]
    QuadratureFailed { a: f64, b: f64, tol: f64 },

    #[error("Moser ladder requires p > 2 - 4/d; got p = {p}, d = {d}")]
    LadderHypothesis { p: f64, d: usize },

    #[error("mismatched functional keys across paths: {0}")]
    MismatchedKeys(String),

    #[error("need at least one path to aggregate")]
    NoPaths,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
