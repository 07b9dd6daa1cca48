use thiserror::Error;

pub type Result<T, E = MrfError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MrfError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate function: {0}")]
    DegenerateFunction(String),

    #[error("belief propagation did not converge after {iterations} iterations (last belief change {last_change:.3e})")]
    BpNotConverged { iterations: usize, last_change: f64 },

    #[error("invalid edge weights: {0}")]
    InvalidWeights(String),

    #[error("line search failed after {backtracks} step reductions: {reason}")]
    StepFailure { backtracks: usize, reason: String },

    #[error("fit failed at lambda = {lambda:.6e}: {reason}")]
    FitFailure { lambda: f64, reason: String },

    #[error("{solver} did not converge in {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("misuse: {0}")]
    Misuse(String),

    #[error("malformed model document: {0}")]
    Model(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MrfError {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MrfError::DegenerateFunction(_)
                | MrfError::BpNotConverged { .. }
                | MrfError::StepFailure { .. }
                | MrfError::FitFailure { .. }
                | MrfError::NotConverged { .. }
                | MrfError::NotPositiveDefinite(_)
        )
    }
}
