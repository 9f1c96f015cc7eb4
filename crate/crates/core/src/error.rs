use thiserror::Error;

/// Errors raised by the model, filter, analysis and optimization layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state matrix is not diagonalizable (eigendecomposition residual {residual:.3e})")]
    NonDiagonalizable { residual: f64 },
    #[error("state matrix is unstable: eigenvalue with real part {real_part:.3e} >= 0")]
    Unstable { real_part: f64 },
    #[error("matrix `{name}` is not Hermitian positive semidefinite")]
    NotPsd { name: &'static str },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("argument outside the function domain: {0}")]
    DomainError(String),
    #[error("series did not converge within {terms} terms")]
    SeriesNonConvergence { terms: usize },
    #[error("unknown sensor index {sensor} (model has {count} sensors)")]
    UnknownSensor { sensor: usize, count: usize },
    #[error("prediction time {t} precedes last update time {t_last}")]
    TimeReversal { t: f64, t_last: f64 },
    #[error("innovation covariance is singular after jitter regularization")]
    SingularInnovation,
    #[error("spectrum of the weighted covariance is degenerate (all eigenvalues ~ 0)")]
    DegenerateSpectrum,
    #[error("branch variance is zero")]
    ZeroVariance,
    #[error("threshold optimization did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("false-negative rate of attacker {attacker} does not respond to its threshold")]
    NonResponsive { attacker: u8 },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
