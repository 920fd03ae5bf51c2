use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure in {stage}: {message} (residual {residual:.3e} after {iterations} iterations)")]
    NumericFailure {
        stage: &'static str,
        message: String,
        residual: f64,
        iterations: usize,
        /// Last iterate in node order, when one exists.
        last_iterate: Option<Vec<f64>>,
    },

    /// An eigenvalue of the truncated operator lies within `zero_tol` of 0.
    #[error("condition (V) violated: eigenvalue {eigenvalue:.3e} within zero_tol {zero_tol:.3e} of 0")]
    ConditionViolated { eigenvalue: f64, zero_tol: f64 },

    #[error("regime gate: p = {p} is not admissible with dim E- = {dim_minus} (need p in (4,6) when E- is nontrivial)")]
    RegimeGate { p: f64, dim_minus: usize },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("no fiber maximum: {0}")]
    NoFiberMax(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numeric(stage: &'static str, message: impl Into<String>, residual: f64, iterations: usize) -> Self {
        Error::NumericFailure { stage, message: message.into(), residual, iterations, last_iterate: None }
    }

    /// True for failures of the paper's hypotheses (condition (V), regime gate).
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(self, Error::ConditionViolated { .. } | Error::RegimeGate { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
