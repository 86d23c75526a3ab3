use thiserror::Error;

/// Failures raised when a model primitive is evaluated outside its domain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// A quantity that must be nonnegative (action, payment, performance) was negative.
    #[error("{what} must be nonnegative, got {value}")]
    Negative { what: &'static str, value: f64 },
    /// The linear success probability reached its cap of one.
    #[error("performance {y} reaches the linear probability cap at {cap}")]
    CapExceeded { y: f64, cap: f64 },
    /// A derivative was requested where it is singular.
    #[error("domain error: {0}")]
    Domain(String),
    /// Vector or matrix sizes disagree with the problem.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}
