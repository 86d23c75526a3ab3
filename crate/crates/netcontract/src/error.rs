use thiserror::Error;

use crate::contract_opt::OptimalContractResult;
use crate::model::{ModelError, ValidationReport};

/// Errors raised by the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no equilibrium: {0}")]
    NoEquilibrium(String),
    #[error("singular system in {context}{}", spectral_radius.map(|r| format!(" (spectral radius {r})")).unwrap_or_default())]
    Singular { context: String, spectral_radius: Option<f64> },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("active-set enumeration supports n <= {cap}, got n = {n}; use the general optimizer")]
    EnumerationCap { n: usize, cap: usize },
    #[error("no optimizer start converged (best KKT residual {:e})", best.kkt_residual)]
    OptimizerFailed { best: Box<OptimalContractResult> },
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Invalid(_) => "invalid_problem",
            Self::Model(ModelError::CapExceeded { .. }) => "cap_exceeded",
            Self::Model(_) => "domain",
            Self::Precondition(_) => "precondition",
            Self::NoEquilibrium(_) => "no_equilibrium",
            Self::Singular { .. } => "singular",
            Self::NonConvergence { .. } => "non_convergence",
            Self::EnumerationCap { .. } => "enumeration_cap",
            Self::OptimizerFailed { .. } => "optimizer_failed",
        }
    }

    /// Whether the error stems from malformed input rather than a solver failure.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Self::Invalid(_) | Self::Model(ModelError::Dimension(_) | ModelError::Negative { .. }))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Reject invalid problems before solving.
pub(crate) fn ensure_valid(problem: &crate::model::Problem) -> Result<()> {
    let report = problem.validate();
    if report.is_ok() {
        Ok(())
    } else {
        Err(Error::Invalid(report))
    }
}
