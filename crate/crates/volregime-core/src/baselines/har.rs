//! HAR regression on log realized variance with daily/weekly/monthly
//! components (lags 1, 5, 22).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{BaselineError, FitDiagnostics};
use crate::marketdata::ReturnObservation;
use crate::math;

/// Added inside every logarithm so zero realized variance stays finite.
pub const HAR_LOG_FLOOR: f64 = 1e-12;

/// Monthly lookback in trading days.
pub const HAR_MONTHLY: usize = 22;
pub const HAR_WEEKLY: usize = 5;

/// Minimum number of regression rows accepted by `fit_har`.
pub const HAR_MIN_ROWS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarParams {
    pub intercept: f64,
    pub beta_daily: f64,
    pub beta_weekly: f64,
    pub beta_monthly: f64,
    pub log_floor: f64,
}

const COLUMN_NAMES: [&str; 4] = ["intercept", "daily", "weekly", "monthly"];

fn log_floor(v: f64) -> f64 {
    math::ln(v + HAR_LOG_FLOOR)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Regressors for the row ending at a given day: [1, log nu_d, log nu_w, log nu_m]
/// where the weekly/monthly terms are means over the trailing 5/22 variances
/// (the slice must hold exactly the trailing 22 values, oldest first).
fn regressors(trailing22: &[f64]) -> [f64; 4] {
    debug_assert_eq!(trailing22.len(), HAR_MONTHLY);
    let daily = trailing22[HAR_MONTHLY - 1];
    let weekly = mean(&trailing22[HAR_MONTHLY - HAR_WEEKLY..]);
    let monthly = mean(trailing22);
    [1.0, log_floor(daily), log_floor(weekly), log_floor(monthly)]
}

/// Solves the 4x4 normal equations by Gaussian elimination with partial
/// pivoting; a vanishing pivot names the offending column.
fn solve_normal_equations(
    xtx: [[f64; 4]; 4],
    xty: [f64; 4],
) -> Result<[f64; 4], BaselineError> {
    let mut a = xtx;
    let mut b = xty;
    let scale = a.iter().flatten().fold(0.0f64, |m, &v| m.max(math::abs(v))).max(1.0);
    for k in 0..4 {
        let mut pivot_row = k;
        for i in k + 1..4 {
            if math::abs(a[i][k]) > math::abs(a[pivot_row][k]) {
                pivot_row = i;
            }
        }
        if math::abs(a[pivot_row][k]) < 1e-12 * scale {
            return Err(BaselineError::DegenerateData(String::from(column_name(k))));
        }
        a.swap(k, pivot_row);
        b.swap(k, pivot_row);
        for i in k + 1..4 {
            let factor = a[i][k] / a[k][k];
            for j in k..4 {
                a[i][j] -= factor * a[k][j];
            }
            b[i] -= factor * b[k];
        }
    }
    let mut x = [0.0; 4];
    for k in (0..4).rev() {
        let mut s = b[k];
        for j in k + 1..4 {
            s -= a[k][j] * x[j];
        }
        x[k] = s / a[k][k];
    }
    Ok(x)
}

fn column_name(k: usize) -> &'static str {
    COLUMN_NAMES[k.min(3)]
}

/// Ordinary least squares of log(nu_{t+1} + floor) on the HAR regressors.
pub fn fit_har(
    returns: &[ReturnObservation],
) -> Result<(HarParams, FitDiagnostics), BaselineError> {
    let needed = HAR_MONTHLY + HAR_MIN_ROWS;
    if returns.len() < needed {
        return Err(BaselineError::TooFewObservations { needed, got: returns.len() });
    }
    let variances: Vec<f64> = returns.iter().map(|o| o.realized_variance).collect();

    let mut rows: Vec<[f64; 4]> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for t in HAR_MONTHLY - 1..variances.len() - 1 {
        rows.push(regressors(&variances[t + 1 - HAR_MONTHLY..=t]));
        targets.push(log_floor(variances[t + 1]));
    }

    // Flag pure collinearity up front with a clearer message than a failed
    // pivot: any regressor with zero variance duplicates the intercept.
    for col in 1..4 {
        let col_vals: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        let m = mean(&col_vals);
        if col_vals.iter().all(|v| math::abs(v - m) < 1e-12 * (1.0 + math::abs(m))) {
            return Err(BaselineError::DegenerateData(format!(
                "{} column is constant (collinear with intercept)",
                column_name(col)
            )));
        }
    }

    let mut xtx = [[0.0; 4]; 4];
    let mut xty = [0.0; 4];
    for (row, &y) in rows.iter().zip(&targets) {
        for i in 0..4 {
            for j in 0..4 {
                xtx[i][j] += row[i] * row[j];
            }
            xty[i] += row[i] * y;
        }
    }
    let beta = solve_normal_equations(xtx, xty)?;

    let sse: f64 = rows
        .iter()
        .zip(&targets)
        .map(|(row, &y)| {
            let fit: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            (y - fit) * (y - fit)
        })
        .sum();

    Ok((
        HarParams {
            intercept: beta[0],
            beta_daily: beta[1],
            beta_weekly: beta[2],
            beta_monthly: beta[3],
            log_floor: HAR_LOG_FLOOR,
        },
        FitDiagnostics {
            log_likelihood_or_sse: sse,
            iterations: 1,
            converged: true,
            short_sample: false,
        },
    ))
}

/// exp of the fitted linear predictor over the trailing 22 variances.
pub fn har_forecast(params: &HarParams, recent: &[f64]) -> Result<f64, BaselineError> {
    if recent.len() < HAR_MONTHLY {
        return Err(BaselineError::TooFewObservations { needed: HAR_MONTHLY, got: recent.len() });
    }
    let trailing = &recent[recent.len() - HAR_MONTHLY..];
    let x = regressors(trailing);
    let log_pred = params.intercept
        + params.beta_daily * x[1]
        + params.beta_weekly * x[2]
        + params.beta_monthly * x[3];
    Ok(math::exp(log_pred))
}
