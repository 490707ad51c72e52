//! Adaptive rolling-window quantile estimation and distribution-free
//! prediction intervals for data streams whose distribution drifts over time.
//!
//! The central primitive is a data-driven window selector: for each candidate
//! look-back window it balances an estimated drift bias against a
//! Bernstein-type stochastic error bound, and picks the window minimizing the
//! sum. The selected window's empirical quantile of conformity scores then
//! yields a prediction interval. Fixed-window and exponentially-weighted
//! split-conformal baselines are included for comparison, together with
//! synthetic drift generators and a multi-seed coverage evaluation harness.

pub mod conformal;
pub mod drift;
pub mod eval;
pub mod experiment;
pub mod quantile;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArwError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("window out of range: {0}")]
    WindowOutOfRange(String),
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, ArwError>;

pub use conformal::{
    fixed_window_interval, weighted_interval, weighted_threshold, ConformityScore, MethodTag,
    PredictionInterval, WeightedBaselineConfig,
};
pub use conformal::arw_interval;
pub use quantile::{
    bias_proxy, left_quantile, psi, right_quantile, select_window, QuantileConfig, SelectionTrace,
    Variant, WindowGrid, WindowedScores,
};
