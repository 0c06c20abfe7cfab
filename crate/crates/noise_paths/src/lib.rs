//! Driving noise for the stochastic solver: piecewise-linear paths (Brownian
//! and fractional Brownian samples, dyadic approximants), their level-2
//! rough-path lifts, and the inhomogeneous Hölder-type metric used to measure
//! driver convergence.

mod lift;
mod path;
mod stats;

pub use lift::{level2_signature, rough_metric, RoughLift};
pub use path::{brownian_path, dyadic_refine, fbm_path, holder_norm, DrivingPath};
pub use stats::ks_two_sample;

/// Errors raised by path construction and metric evaluation.
#[derive(Debug, thiserror::Error)]
pub enum NoiseError {
    #[error("times must start at 0 and increase strictly (violation at index {0})")]
    BadKnots(usize),
    #[error("non-finite value at knot {0}")]
    NonFinite(usize),
    #[error("need {expected} values for {knots} knots x {dims} dims, got {got}")]
    LengthMismatch { expected: usize, got: usize, knots: usize, dims: usize },
    #[error("paths have mismatched dims: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("paths have mismatched horizons: {0} vs {1}")]
    HorizonMismatch(f64, f64),
    #[error("need at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot count {0} exceeds the exact-covariance cap 2^14")]
    TooManyKnots(usize),
    #[error("hurst parameter must lie in (0,1), got {0}")]
    BadHurst(f64),
    #[error("holder exponent must lie in (0,1), got {0}")]
    BadAlpha(f64),
    #[error("metric exponent must lie in (1/3, 1], got {0}")]
    BadMetricAlpha(f64),
    #[error("covariance factorization failed: {0}")]
    NotPositiveDefinite(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
