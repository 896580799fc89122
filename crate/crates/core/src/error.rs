//! Error types shared across the toolkit.

use thiserror::Error;

/// Unified error type for system construction, analysis and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// A transfer function with deg(num) > deg(den) was supplied where a
    /// proper one is required.
    #[error("improper transfer function: deg(num)={num_deg} > deg(den)={den_deg}")]
    ImproperTransfer { num_deg: usize, den_deg: usize },

    /// Denominator polynomial is identically zero.
    #[error("denominator polynomial is zero")]
    ZeroDenominator,

    /// Matrix dimensions do not line up for the requested operation.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Frequency response requested too close to an imaginary-axis pole.
    #[error("evaluation at omega={omega} is within tolerance of an imaginary-axis pole")]
    PoleProximity { omega: f64 },

    /// A feedback interconnection has a singular feedthrough loop or an
    /// all-static algebraic cycle.
    #[error("well-posedness violation: {0}")]
    WellPosedness(String),

    /// Operation requires a stable system (all poles in the open left
    /// half-plane after minimality reduction).
    #[error("unstable system: {0}")]
    Unstable(String),

    /// Input violates a declared invariant (radius out of range, rank
    /// deficient basis, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An iterative numerical procedure failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed descriptor or config file.
    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, Error>;
