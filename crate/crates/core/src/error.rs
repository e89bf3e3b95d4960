use thiserror::Error;

use crate::let_solver::{SolveReport, TransportPlan};

pub type Result<T> = std::result::Result<T, HkError>;

#[derive(Debug, Error)]
pub enum HkError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point index {index} out of range for a space with {size} points")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("measures live on different ground spaces")]
    SpaceMismatch,

    #[error("negative mass {0}")]
    NegativeMass(f64),

    #[error("infeasible potentials at {point}: residual {residual:e}")]
    Infeasible { point: String, residual: f64 },

    #[error("support too large: {size} atoms (limit {limit})")]
    SupportTooLarge { size: usize, limit: usize },

    #[error("tuple budget exceeded: {tuples} tuples (budget {budget})")]
    TupleBudgetExceeded { tuples: usize, budget: usize },

    #[error("solver did not converge: {0}")]
    NonConvergence(Box<NonConvergence>),

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Best iterate of a solver run that hit its iteration budget.
#[derive(Debug, Clone)]
pub struct NonConvergence {
    pub plan: TransportPlan,
    pub report: SolveReport,
}

impl std::fmt::Display for NonConvergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "best primal {:.12e}, gap {:.3e} after {} iterations",
            self.report.primal, self.report.gap, self.report.iterations
        )
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(HkError::InvalidInput(msg.into()))
}
