//! Error taxonomy for the toolkit.
//!
//! Errors are grouped by how a caller should react: `Domain` and `Usage` mean
//! the inputs can never work (fix the call), `Config` means a configuration
//! file failed validation, while `Numerical`, `Degenerate` and `Planning`
//! report that a mathematically valid request failed on this data.

use thiserror::Error;

/// Unified error type for all library operations.
#[derive(Debug, Error)]
pub enum VouError {
    /// Input outside the mathematical domain of the operation
    /// (e.g. `t <= 0` for a singular kernel, `beta >= 0` in the ergodic regime).
    #[error("domain error: {0}")]
    Domain(String),

    /// API misuse that is detectable at runtime (non-nesting grids,
    /// a transform input that must start at zero, mismatched lengths).
    #[error("usage error: {0}")]
    Usage(String),

    /// A numerical procedure failed beyond its tolerance
    /// (negative resolvent mass, covariance not positive definite).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The data itself is degenerate for the requested estimator
    /// (constant path, vanishing design denominator).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// The mesh-condition planner could not satisfy its constraints.
    #[error("planning error: {0}")]
    Planning(String),

    /// Configuration parsing or semantic validation failed.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem or serialization failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl VouError {
    /// CLI exit code class: 1 = validation (caller mistake),
    /// 2 = numerical/data failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            VouError::Domain(_) | VouError::Usage(_) | VouError::Config(_) => 1,
            VouError::Numerical(_)
            | VouError::Degenerate(_)
            | VouError::Planning(_)
            | VouError::Io(_) => 2,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, VouError>;
