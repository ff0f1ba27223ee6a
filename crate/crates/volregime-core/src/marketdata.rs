//! Price series, log returns, realized variance, sliding windows, and the
//! chronological train/test split.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MarketDataError {
    #[error("non-positive close {close} at row {row}")]
    NonPositivePrice { row: usize, close: String },
    #[error("duplicate date {date} at row {row}")]
    DuplicateDate { row: usize, date: Date },
    #[error("not enough data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("train fraction must lie in (0, 1), got {0}")]
    BadTrainFraction(String),
    #[error("quantile level must lie in [0, 1], got {0}")]
    BadQuantile(String),
}

/// Calendar date, ordered lexicographically by (year, month, day).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Date {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl Date {
    pub fn new(year: i32, month: u8, day: u8) -> Self {
        Self { year, month, day }
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

/// One daily closing price. `close` must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub date: Date,
    pub close: f64,
}

/// Ordered daily closing prices with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    points: Vec<PricePoint>,
    /// Set when the input rows had to be sorted by date.
    pub was_unsorted: bool,
}

impl PriceSeries {
    /// Validates and assembles a series. Rows arriving out of order are
    /// sorted and flagged; duplicate dates and non-positive closes are hard
    /// errors.
    pub fn new(mut points: Vec<PricePoint>) -> Result<Self, MarketDataError> {
        for (row, p) in points.iter().enumerate() {
            if !(p.close > 0.0) || !p.close.is_finite() {
                return Err(MarketDataError::NonPositivePrice {
                    row,
                    close: alloc::format!("{}", p.close),
                });
            }
        }
        let was_unsorted = points.windows(2).any(|w| w[0].date >= w[1].date);
        if was_unsorted {
            points.sort_by_key(|p| p.date);
            if let Some(pos) = points.windows(2).position(|w| w[0].date == w[1].date) {
                return Err(MarketDataError::DuplicateDate {
                    row: pos + 1,
                    date: points[pos + 1].date,
                });
            }
        }
        Ok(Self { points, was_unsorted })
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Daily log return r_t and its square, the realized-variance proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnObservation {
    pub date: Date,
    pub log_return: f64,
    pub realized_variance: f64,
}

/// A supervised example: `w` consecutive return observations ending at
/// `end_index`, paired with the next day's realized variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub end_index: usize,
    pub history: Vec<ReturnObservation>,
    pub target: f64,
}

impl WindowSample {
    pub fn window_len(&self) -> usize {
        self.history.len()
    }

    /// Mean of the last `m` realized variances in the history.
    pub fn recent_variance_mean(&self, m: usize) -> Option<f64> {
        if m == 0 || m > self.history.len() {
            return None;
        }
        let tail = &self.history[self.history.len() - m..];
        Some(tail.iter().map(|o| o.realized_variance).sum::<f64>() / m as f64)
    }
}

/// Record of where the chronological split fell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Largest target index (end_index + 1) appearing in the train set.
    pub boundary_index: usize,
}

/// r_t = ln(P_t / P_{t-1}), nu_t = r_t^2. Output has one entry per input
/// day after the first.
pub fn compute_returns(prices: &PriceSeries) -> Result<Vec<ReturnObservation>, MarketDataError> {
    if prices.len() < 2 {
        return Err(MarketDataError::InsufficientData { needed: 2, got: prices.len() });
    }
    Ok(prices
        .points()
        .windows(2)
        .map(|pair| {
            let r = math::ln(pair[1].close / pair[0].close);
            ReturnObservation {
                date: pair[1].date,
                log_return: r,
                realized_variance: r * r,
            }
        })
        .collect())
}

/// Sliding windows of length `w`; sample i covers indices [i, i+w) with the
/// observation at i+w as target.
pub fn build_windows(
    returns: &[ReturnObservation],
    w: usize,
) -> Result<Vec<WindowSample>, MarketDataError> {
    assert!(w > 0, "window length must be positive");
    if returns.len() < w + 1 {
        return Err(MarketDataError::InsufficientData { needed: w + 1, got: returns.len() });
    }
    Ok((0..returns.len() - w)
        .map(|i| WindowSample {
            end_index: i + w - 1,
            history: returns[i..i + w].to_vec(),
            target: returns[i + w].realized_variance,
        })
        .collect())
}

/// First floor(train_fraction * n) samples become train, the rest test. No
/// shuffling; the samples must already be in end_index order.
pub fn split_chronological(
    samples: &[WindowSample],
    train_fraction: f64,
) -> Result<(Vec<WindowSample>, Vec<WindowSample>, SplitSpec), MarketDataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(MarketDataError::BadTrainFraction(alloc::format!("{train_fraction}")));
    }
    if samples.is_empty() {
        return Err(MarketDataError::InsufficientData { needed: 1, got: 0 });
    }
    let n_train = ((train_fraction * samples.len() as f64) as usize).min(samples.len());
    let (train, test) = samples.split_at(n_train);
    let boundary_index = train.last().map(|s| s.end_index + 1).unwrap_or(0);
    Ok((
        train.to_vec(),
        test.to_vec(),
        SplitSpec { train_fraction, boundary_index },
    ))
}

/// Nearest-rank q-quantile (1-based rank ceil(q*n)) of the train targets.
pub fn training_quantile(train: &[WindowSample], q: f64) -> Result<f64, MarketDataError> {
    if train.is_empty() {
        return Err(MarketDataError::InsufficientData { needed: 1, got: 0 });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(MarketDataError::BadQuantile(alloc::format!("{q}")));
    }
    let mut targets: Vec<f64> = train.iter().map(|s| s.target).collect();
    targets.sort_by(|a, b| a.partial_cmp(b).expect("targets are finite"));
    let rank = (math::ceil(q * targets.len() as f64) as usize).max(1);
    Ok(targets[rank - 1])
}
