//! Classical forecasters: rolling mean, HAR, GARCH(1,1), GJR-GARCH, plus the
//! derivative-free optimizer used for maximum-likelihood fitting.

mod garch;
mod har;
pub mod simplex;

pub use garch::{fit_garch, garch_filter, garch_forecast, GarchParams, GARCH_MIN_OBS};
pub use har::{fit_har, har_forecast, HarParams, HAR_LOG_FLOOR, HAR_MIN_ROWS, HAR_MONTHLY};

use alloc::string::String;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("non-positive variance state {0}")]
    NonPositiveVariance(f64),
}

/// Fit bookkeeping shared by the HAR and GARCH estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Log-likelihood for GARCH fits, sum of squared residuals for HAR.
    pub log_likelihood_or_sse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the sample was below the recommended size floor.
    pub short_sample: bool,
}

/// Arithmetic mean of the recent realized variances.
pub fn rolling_mean_forecast(history: &[f64]) -> Result<f64, BaselineError> {
    if history.is_empty() {
        return Err(BaselineError::EmptyInput);
    }
    Ok(history.iter().sum::<f64>() / history.len() as f64)
}
