use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("field is {edge:.3e} at the padding edge (threshold {threshold:.3e}); aliasing risk")]
    TailTooLarge { edge: f64, threshold: f64 },

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("grid of {requested} unknowns exceeds the budget of {budget}")]
    BudgetExceeded { requested: usize, budget: usize },

    #[error("iterate lost positivity (min/max = {ratio:.3e})")]
    PositivityLost { ratio: f64 },

    #[error("radius {radius:.3e} is outside the validity range of the profile")]
    OutOfRange { radius: f64 },

    #[error("boundary part of the correction is negative (min {min:.3e})")]
    NegativePi { min: f64 },

    #[error("bordered system is nearly singular (peaks too close or grid too coarse)")]
    SingularBordered,

    #[error("fixed-point iteration stopped contracting")]
    ContractionFailed { trace: Vec<f64> },

    #[error("negative base in a non-integer power")]
    NegativeBase,

    #[error("finite-difference step {step:.3e} is below the grid spacing {h:.3e}")]
    StepBelowGrid { step: f64, h: f64 },

    #[error("maximizer reached the boundary of the admissible set")]
    HitBoundary,

    #[error("Newton iteration diverged (residual {residual:.3e})")]
    NewtonDiverged { residual: f64 },

    #[error("invalid configuration: {field}: {message}")]
    ConfigInvalid { field: String, message: String },

    /// A failure recorded by a computation shared between callers.
    #[error("{0}")]
    Upstream(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
