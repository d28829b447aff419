//! Error type shared across the crate.
//!
//! Variants are grouped by the stage that raises them: construction and
//! shape validation, experiment configuration, and numerical failures that
//! survive every fallback.

use thiserror::Error;

/// Everything that can go wrong when building operators or running the
/// estimator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A kernel was built with an even or zero tap count. Centered kernels
    /// need an odd number of taps so the output aligns with the input grid.
    #[error("kernel length must be odd and nonzero, got {len}")]
    EvenKernel { len: usize },

    /// Two shapes that must agree do not. `what` names the quantity being
    /// checked so the message is actionable on its own.
    #[error("{what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A group count that does not evenly divide a channel count.
    #[error("group count {groups} does not divide channel count {channels}")]
    GroupMismatch { groups: usize, channels: usize },

    /// A dimension that must be at least one was zero.
    #[error("{what} must be nonzero")]
    EmptyDimension { what: &'static str },

    /// An operation that needs at least one element received an empty list.
    #[error("{what} must not be empty")]
    EmptySet { what: &'static str },

    /// Non-finite value where the contract requires finite data.
    #[error("{what} contains a non-finite value at index {index}")]
    NonFinite { what: &'static str, index: usize },

    /// The least-squares system has fewer rows than unknowns, so the
    /// minimizer is not unique and the error estimate is meaningless.
    #[error(
        "underdetermined least-squares system: {rows} rows < {unknowns} unknowns \
         per output channel; increase the input pool or signal length"
    )]
    Underdetermined { rows: usize, unknowns: usize },

    /// Slope fitting needs at least two usable points after excluding the
    /// degenerate ones; the excluded points are listed with the reason.
    #[error("slope fit needs at least two usable points, kept {kept}; excluded: {excluded}")]
    InsufficientSlopePoints { kept: usize, excluded: String },

    /// Bound ratios divide by (1 - 1/N)^p, which degenerates at N < 2.
    #[error("bound ratio is undefined for group count {groups}; need at least 2 groups")]
    BoundRatioDomain { groups: usize },

    /// Invalid exponent for a bound ratio; only the proven exponents are
    /// accepted.
    #[error("bound ratio exponent must be 1 or 2, got {p}")]
    InvalidExponent { p: u32 },

    /// A numerical routine failed beyond recovery (for example an
    /// eigendecomposition that did not converge).
    #[error("numerical failure: {0}")]
    Numerical(String),
}
