//! Demonstration selection: random, fixed-prior conditional, and
//! label-estimate conditional, with the leakage-free
//! regime estimator.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::marketdata::WindowSample;
use crate::pool::{DemoPool, Regime};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Configuration(String),
    #[error("lookback m={m} exceeds window length w={w}")]
    LookbackTooLong { m: usize, w: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    FixedPrior,
    LabelEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    pub k: usize,
    /// Low-pool fraction for the fixed-prior strategy.
    pub alpha: f64,
    /// Low-pool fraction applied when the estimated regime is low.
    pub alpha_low: f64,
    /// Low-pool fraction applied when the estimated regime is high.
    pub alpha_high: f64,
    /// Lookback for the recent-volatility signal.
    pub m: usize,
    /// Regime-estimate threshold; defaults to the pool's tau.
    pub tau_prime: f64,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.k == 0 && self.strategy != Strategy::Random {
            return Err(SamplerError::Configuration(String::from("K must be positive")));
        }
        for (name, a) in [("alpha", self.alpha), ("alpha_low", self.alpha_low), ("alpha_high", self.alpha_high)] {
            if !(0.0..=1.0).contains(&a) {
                return Err(SamplerError::Configuration(format!("{name} must lie in [0, 1], got {a}")));
            }
        }
        if self.strategy == Strategy::LabelEstimate && self.alpha_low <= self.alpha_high {
            return Err(SamplerError::Configuration(format!(
                "label_estimate requires alpha_low > alpha_high, got {} <= {}",
                self.alpha_low, self.alpha_high
            )));
        }
        if self.m == 0 {
            return Err(SamplerError::Configuration(String::from("m must be positive")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeEstimate {
    pub signal: f64,
    pub label: Regime,
}

/// One draw from the pool: positions into `pool.demonstrations` plus
/// shortfall bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    /// Number of slots that could not be filled from the intended sub-pool.
    pub shortfall: usize,
}

/// Mean of the last `m` history variances against tau_prime. Uses nothing
/// past the window's end index.
pub fn estimate_regime(
    window: &WindowSample,
    m: usize,
    tau_prime: f64,
) -> Result<RegimeEstimate, SamplerError> {
    if m == 0 || m > window.history.len() {
        return Err(SamplerError::LookbackTooLong { m, w: window.history.len() });
    }
    let signal = window.recent_variance_mean(m).expect("m validated");
    let label = if signal >= tau_prime { Regime::High } else { Regime::Low };
    Ok(RegimeEstimate { signal, label })
}

/// Derives a per-query seed from the experiment seed and the query's end
/// index (splitmix64), so concurrent evaluation stays reproducible.
pub fn derive_seed(global_seed: u64, end_index: usize) -> u64 {
    let mut z = global_seed ^ (end_index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn draw_without_replacement(rng: &mut ChaCha8Rng, from: &[usize], count: usize) -> Vec<usize> {
    debug_assert!(count <= from.len());
    rand::seq::index::sample(rng, from.len(), count)
        .into_iter()
        .map(|i| from[i])
        .collect()
}

/// Uniform without replacement over the whole pool. A pool smaller than K
/// returns the entire pool with the deficit flagged.
pub fn sample_random(pool: &DemoPool, k: usize, seed: u64) -> Selection {
    let n = pool.len();
    let take = k.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..n).collect();
    Selection { indices: draw_without_replacement(&mut rng, &all, take), shortfall: k - take }
}

/// Fixed prior: floor(alpha*K) draws from the low pool, the rest from the
/// high pool. A sub-pool that cannot fill its quota passes the deficit to
/// the other pool, counted as shortfall.
pub fn sample_fixed_prior(pool: &DemoPool, k: usize, alpha: f64, seed: u64) -> Selection {
    let low = pool.indices_by_regime(Regime::Low);
    let high = pool.indices_by_regime(Regime::High);

    let quota_low = (alpha * k as f64) as usize;
    let quota_high = k - quota_low;

    let take_low = quota_low.min(low.len());
    let take_high = quota_high.min(high.len());
    // Transfer unmet quotas to the other side.
    let extra_high = (quota_low - take_low).min(high.len() - take_high);
    let extra_low = (quota_high - take_high).min(low.len() - take_low);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = draw_without_replacement(&mut rng, &low, take_low + extra_low);
    indices.extend(draw_without_replacement(&mut rng, &high, take_high + extra_high));
    let shortfall = (quota_low - take_low) + (quota_high - take_high);
    Selection { indices, shortfall }
}

/// Label estimate: classify the query's regime from its own window, then
/// apply the fixed-prior draw with alpha_low or alpha_high accordingly.
pub fn sample_label_estimate(
    pool: &DemoPool,
    window: &WindowSample,
    config: &SamplerConfig,
    seed: u64,
) -> Result<(Selection, RegimeEstimate), SamplerError> {
    config.validate()?;
    let estimate = estimate_regime(window, config.m, config.tau_prime)?;
    let alpha = match estimate.label {
        Regime::Low => config.alpha_low,
        Regime::High => config.alpha_high,
    };
    Ok((sample_fixed_prior(pool, config.k, alpha, seed), estimate))
}
