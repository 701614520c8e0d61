// SPDX-License-Identifier: Apache-2.0

//! Error type shared by all modules.

use thiserror::Error;

/// Errors raised by model construction, discretisation and pricing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model or contract parameter violates its documented domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A time-dependent schedule was queried past its last knot.
    #[error("schedule exhausted: t = {t} lies beyond the last knot {horizon}")]
    ScheduleExhausted { t: f64, horizon: f64 },

    /// The local volatility vanished where the transform divides by it.
    #[error("singular volatility at r = {r}")]
    SingularVolatility { r: f64 },

    /// Grid construction failed.
    #[error("grid construction failed: {0}")]
    Grid(String),

    /// A generator row produced a negative off-diagonal rate.
    #[error("negative transition rate {rate:e} at node {node} (state {state}); refine the grid or shrink the bounds")]
    NegativeRate { node: usize, state: f64, rate: f64 },

    /// A regime generator of the two-layer chain produced a negative rate.
    #[error("negative transition rate {rate:e} in regime {regime} at node {node}")]
    NegativeRegimeRate { regime: usize, node: usize, rate: f64 },

    /// The matrix exponential failed its post-conditions.
    #[error("matrix exponential failed: {0}")]
    Exponential(String),

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// A time does not fall on the pricing time grid.
    #[error("time {t} is not aligned with the time grid (step {dt})")]
    Misaligned { t: f64, dt: f64 },

    /// Calibration could not reproduce the curve.
    #[error("calibration failed at t = {t}: {reason}")]
    Calibration { t: f64, reason: String },

    /// The operation is not available for the requested model.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The direct two-layer path would need too much memory.
    #[error("enlarged state space of {states} states exceeds the limit {limit}; use the fast pricer")]
    TooLarge { states: usize, limit: usize },
}

/// Convenience alias.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
