use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize the zero vector")]
    ZeroVector,
    #[error("operation requires a nonempty vector")]
    EmptyVector,
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("no spectral gap: Lambda_low = {upper} must exceed lambda_low = {lower}")]
    NoSpectralGap { lower: f64, upper: f64 },
    #[error("eps0 = {eps0} exceeds the admissible initial accuracy min(d, delta_bar) = {limit}")]
    InitialAccuracyTooCoarse { eps0: f64, limit: f64 },
    #[error("Rayleigh estimate {0} is not positive")]
    NonPositiveRayleigh(f64),
    #[error("s_bar = {s_bar} must be below the compression exponent s* = {s_star}")]
    CompressionExponent { s_bar: f64, s_star: f64 },
    #[error("iterate norm {norm} dropped below 1/2 at step {step}")]
    NormCollapse { step: usize, norm: f64 },
    #[error("section of size {0} exceeds the dense oracle cap")]
    SectionTooLarge(usize),
    #[error("degenerate spectral gap: second eigenvalue {second} is too close to {first}")]
    DegenerateGap { first: f64, second: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
