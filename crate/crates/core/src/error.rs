use thiserror::Error;

/// Failures raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coefficient is not positive at x = {x} (a = {value})")]
    NonPositiveCoefficient { x: f64, value: f64 },
    #[error("degeneracy hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("drift envelope beta(x)/x unbounded near 0 (sup {sup} over samples)")]
    EnvelopeUnbounded { sup: f64 },
    #[error("grid needs at least 8 nodes, got {0}")]
    BadResolution(usize),
    #[error("degenerate Hardy sample: weighted gradient energy vanished")]
    DegenerateSample,
    #[error("tridiagonal solve hit a zero pivot at row {row} of step {step}")]
    SolverBreakdown { step: usize, row: usize },
    #[error("invalid Carleman weight: {0}")]
    WeightInvalid(String),
    #[error("time {t} outside the open horizon (0, {horizon})")]
    OutOfDomain { t: f64, horizon: f64 },
    #[error("non-finite integrand in {0}")]
    NonFiniteIntegral(&'static str),
    #[error("conjugate gradient did not converge in {iters} iterations (relative residual {residual:e})")]
    NoConvergence {
        iters: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("operator is not positive definite (curvature {curvature:e} at iteration {iter})")]
    NotSpd { iter: usize, curvature: f64 },
    #[error("observation energy vanished for {retries} consecutive samples")]
    ZeroDenominator { retries: usize },
    #[error("frozen coefficient {name} = {value} exceeds cap {cap}")]
    UnboundedFrozenCoefficient {
        name: &'static str,
        value: f64,
        cap: f64,
    },
    #[error(
        "fixed-point iteration failed after {iters} iterations (last increment {last_increment:e})"
    )]
    NoFixedPoint { iters: usize, last_increment: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// True for errors that stem from hypothesis or input validation rather
    /// than from a failed numerical solve.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveCoefficient { .. }
                | Error::HypothesisViolated(_)
                | Error::EnvelopeUnbounded { .. }
                | Error::BadResolution(_)
                | Error::WeightInvalid(_)
                | Error::OutOfDomain { .. }
                | Error::UnboundedFrozenCoefficient { .. }
                | Error::InvalidInput(_)
        )
    }

    /// Short stable identifier, used in machine-readable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonPositiveCoefficient { .. } => "NonPositiveCoefficient",
            Error::HypothesisViolated(_) => "HypothesisViolated",
            Error::EnvelopeUnbounded { .. } => "EnvelopeUnbounded",
            Error::BadResolution(_) => "BadResolution",
            Error::DegenerateSample => "DegenerateSample",
            Error::SolverBreakdown { .. } => "SolverBreakdown",
            Error::WeightInvalid(_) => "WeightInvalid",
            Error::OutOfDomain { .. } => "OutOfDomain",
            Error::NonFiniteIntegral(_) => "NonFiniteIntegral",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::NotSpd { .. } => "NotSPD",
            Error::ZeroDenominator { .. } => "ZeroDenominator",
            Error::UnboundedFrozenCoefficient { .. } => "UnboundedFrozenCoefficient",
            Error::NoFixedPoint { .. } => "NoFixedPoint",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
