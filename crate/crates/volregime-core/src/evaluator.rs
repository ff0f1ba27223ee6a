//! Overall and regime-wise error metrics, leakage-free backtesting, and
//! report rendering.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::baselines::rolling_mean_forecast;
use crate::marketdata::WindowSample;
use crate::math;
use crate::pool::{label_regime, Regime};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no records to evaluate")]
    EmptyInput,
    #[error("records mix methods {0} and {1}")]
    MixedMethods(String, String),
    #[error("method {method} failed on every sample: {last_error}")]
    AllSamplesFailed { method: String, last_error: String },
}

/// Per-record annotations surfaced in reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFlags {
    /// A negative model reply was clamped to zero.
    pub clamped: bool,
    /// A sampler sub-pool could not fill its quota.
    pub shortfall: bool,
    /// A model reply could not be parsed during refinement.
    pub parse_fallback: bool,
    /// The method failed and the rolling-mean fallback was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub end_index: usize,
    pub method: String,
    pub prediction: f64,
    pub truth: f64,
    pub regime_true: Regime,
    pub flags: RecordFlags,
}

/// Display factor used by human-readable reports; stored values stay raw.
pub const DISPLAY_SCALE: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub mae: f64,
    pub rmse: f64,
    /// Absent when the corresponding partition is empty.
    pub mae_low: Option<f64>,
    pub mae_high: Option<f64>,
    pub n_low: usize,
    pub n_high: usize,
}

/// A forecast produced by some method for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forecast {
    pub value: f64,
    pub flags: RecordFlags,
}

impl Forecast {
    pub fn plain(value: f64) -> Self {
        Self { value, flags: RecordFlags::default() }
    }
}

/// MAE, RMSE, and the tau-partitioned regime MAEs over one method's records.
pub fn compute_metrics(records: &[ForecastRecord], tau: f64) -> Result<MetricsReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let method = records[0].method.clone();
    if let Some(other) = records.iter().find(|r| r.method != method) {
        return Err(EvalError::MixedMethods(method, other.method.clone()));
    }

    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut low_sum = 0.0;
    let mut high_sum = 0.0;
    let mut n_low = 0usize;
    let mut n_high = 0usize;
    for r in records {
        let err = math::abs(r.prediction - r.truth);
        abs_sum += err;
        sq_sum += err * err;
        match label_regime(r.truth, tau) {
            Regime::Low => {
                low_sum += err;
                n_low += 1;
            }
            Regime::High => {
                high_sum += err;
                n_high += 1;
            }
        }
    }
    let n = records.len() as f64;
    Ok(MetricsReport {
        method,
        mae: abs_sum / n,
        rmse: math::sqrt(sq_sum / n),
        mae_low: (n_low > 0).then(|| low_sum / n_low as f64),
        mae_high: (n_high > 0).then(|| high_sum / n_high as f64),
        n_low,
        n_high,
    })
}

/// Runs `forecaster` over every test sample in chronological order. A
/// failing sample falls back to the rolling mean of its own window,
/// flagged, so every method scores the same record count.
pub fn run_backtest<F, E>(
    test: &[WindowSample],
    method: &str,
    tau: f64,
    mut forecaster: F,
) -> Result<Vec<ForecastRecord>, EvalError>
where
    F: FnMut(&WindowSample) -> Result<Forecast, E>,
    E: core::fmt::Display,
{
    if test.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut records = Vec::with_capacity(test.len());
    let mut failures = 0usize;
    let mut last_error = String::new();
    for sample in test {
        let forecast = match forecaster(sample) {
            Ok(f) => f,
            Err(e) => {
                failures += 1;
                last_error = format!("{e}");
                let variances: Vec<f64> =
                    sample.history.iter().map(|o| o.realized_variance).collect();
                let value = rolling_mean_forecast(&variances).unwrap_or(0.0);
                Forecast { value, flags: RecordFlags { fallback: true, ..Default::default() } }
            }
        };
        records.push(ForecastRecord {
            end_index: sample.end_index,
            method: method.to_string(),
            prediction: forecast.value,
            truth: sample.target,
            regime_true: label_regime(sample.target, tau),
            flags: forecast.flags,
        });
    }
    if failures == test.len() {
        return Err(EvalError::AllSamplesFailed { method: method.to_string(), last_error });
    }
    Ok(records)
}

fn display_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.2}", v * DISPLAY_SCALE),
        None => String::from("-"),
    }
}

/// Markdown table with all values scaled by 10^4 for display.
pub fn render_markdown(reports: &[MetricsReport]) -> Result<String, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut out = String::new();
    out.push_str("| Method | MAE | RMSE | MAE_low | MAE_high | n_low | n_high |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            r.method,
            display_cell(Some(r.mae)),
            display_cell(Some(r.rmse)),
            display_cell(r.mae_low),
            display_cell(r.mae_high),
            r.n_low,
            r.n_high
        ));
    }
    out.push_str("\nAll error values are scaled by 1e4 for display.\n");
    Ok(out)
}

/// CSV with raw (unscaled) values.
pub fn render_csv(dataset: &str, reports: &[MetricsReport]) -> Result<String, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut out = String::from("dataset,method,mae,rmse,mae_low,mae_high,n_low,n_high\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in reports {
        out.push_str(&format!(
            "{},{},{:e},{:e},{},{},{},{}\n",
            dataset,
            r.method,
            r.mae,
            r.rmse,
            opt(r.mae_low),
            opt(r.mae_high),
            r.n_low,
            r.n_high
        ));
    }
    Ok(out)
}
