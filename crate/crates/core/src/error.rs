use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("network has no processes")]
    EmptyProcessList,

    #[error("network is cyclic: {}", cycle.join(" -> "))]
    CyclicNetwork { cycle: Vec<String> },

    #[error("process {process}: {reason}")]
    InvalidProcess { process: usize, reason: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("parse error{}: {message}", location.as_ref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Parse { location: Option<String>, message: String },

    #[error("refinement did not converge after {halvings} halvings (last change {last_change})")]
    NoConvergence { halvings: usize, last_change: f64 },

    #[error("degenerate rate fit: {reason}")]
    DegenerateFit { reason: String, residuals: Vec<f64> },

    #[error("level {level} needs {requested} samples, above the cap of {cap}")]
    BudgetExceeded { level: usize, requested: u64, cap: u64 },

    #[error("coupled pair needs coarse dt = 2 x fine dt, got fine {fine} and coarse {coarse}")]
    MismatchedRatio { fine: f64, coarse: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
