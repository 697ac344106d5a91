use thiserror::Error;

/// Errors produced by geometric evaluation, integration and scenario loading.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite {what} at point {point:?}")]
    NonFinite { what: &'static str, point: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("base point mismatch: {left:?} vs {right:?}")]
    BaseMismatch { left: Vec<f64>, right: Vec<f64> },

    #[error("parameter {param} = {value} outside domain [{lo}, {hi}]")]
    OutOfDomain {
        param: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("null vector: scalar square {square:e} within tolerance {tol:e}")]
    NullVector { square: f64, tol: f64 },

    #[error("degenerate metric: |det| = {det:e}")]
    DegenerateMetric { det: f64 },

    #[error("metric not symmetric: max asymmetry {asym:e}")]
    AsymmetricMetric { asym: f64 },

    #[error("ODE integration exceeded {max_steps} steps")]
    StepLimit { max_steps: usize },

    #[error("ODE step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("quadrature did not converge: error estimate {estimate:e} after {intervals} intervals")]
    Quadrature { estimate: f64, intervals: usize },

    #[error("rank-deficient probe set (condition number {cond:e})")]
    RankDeficient { cond: f64 },

    #[error("zero mass at (s, r) = ({s}, {r})")]
    ZeroMass { s: f64, r: f64 },

    #[error("metric required but scenario {scenario} has none")]
    MissingMetric { scenario: String },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("parameter `{key}` = {value} out of range: {reason}")]
    ParamOutOfRange {
        key: String,
        value: f64,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::UnknownScenario(_)
                | Error::ParamOutOfRange { .. }
                | Error::Config(_)
                | Error::InvalidArgument(_)
        )
    }
}
