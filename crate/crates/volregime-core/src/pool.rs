//! Oracle-guided refinement over training samples and the regime-labeled
//! demonstration pool built from it.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::{GatewayError, Model, ModelRequest};
use crate::marketdata::WindowSample;
use crate::math;
use crate::promptcodec::{self, PromptError};

/// Number of trailing history variances averaged into the feedback hint.
pub const HINT_LOOKBACK: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoolError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("initial prediction unparseable: {0}")]
    UnparseableInitial(PromptError),
    #[error("all {attempted} candidate demonstrations were skipped")]
    AllSkipped { attempted: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    High,
    Low,
}

/// Label rule: high iff the next-day realized variance reaches tau.
pub fn label_regime(next_variance: f64, tau: f64) -> Regime {
    if next_variance >= tau {
        Regime::High
    } else {
        Regime::Low
    }
}

/// One pool entry: the rendered history-plus-query prompt, the refined
/// prediction (not the ground truth), and the regime of the true target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub prompt_text: String,
    pub refined_prediction: f64,
    pub regime: Regime,
    pub source_index: usize,
    pub iterations_run: u32,
    /// Refinement steps whose reply could not be parsed (prediction kept).
    pub parse_fallbacks: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoPool {
    pub demonstrations: Vec<Demonstration>,
    pub tau: f64,
    pub created_from: String,
}

impl DemoPool {
    pub fn len(&self) -> usize {
        self.demonstrations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demonstrations.is_empty()
    }

    pub fn count_by_regime(&self, regime: Regime) -> usize {
        self.demonstrations.iter().filter(|d| d.regime == regime).count()
    }

    /// Positions of pool entries carrying the given regime.
    pub fn indices_by_regime(&self, regime: Regime) -> Vec<usize> {
        self.demonstrations
            .iter()
            .enumerate()
            .filter(|(_, d)| d.regime == regime)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Result of one refinement step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOutcome {
    pub value: f64,
    /// Reply was unparseable; the previous value was kept.
    pub parse_fallback: bool,
}

/// Builds the feedback prompt for the current prediction and asks the model
/// for a corrected one. An unparseable reply keeps the current value.
pub fn refine_once<M: Model + ?Sized>(
    current: f64,
    sample: &WindowSample,
    gateway: &M,
) -> Result<RefineOutcome, GatewayError> {
    let truth = sample.target;
    let error = math::abs(current - truth);
    let hint = sample
        .recent_variance_mean(HINT_LOOKBACK.min(sample.history.len()))
        .unwrap_or(truth);
    let feedback = promptcodec::render_feedback(truth, current, error, hint)
        .expect("recomputed error always matches");
    let reply = gateway.complete(&ModelRequest::new(feedback))?;
    match promptcodec::parse_forecast(&reply.text) {
        Ok(parsed) => Ok(RefineOutcome { value: parsed.value, parse_fallback: false }),
        Err(_) => Ok(RefineOutcome { value: current, parse_fallback: true }),
    }
}

/// Initial prediction (input + query) followed by exactly `j_iterations`
/// refinement steps; labels the regime from the true target against tau.
pub fn build_demonstration<M: Model + ?Sized>(
    sample: &WindowSample,
    gateway: &M,
    j_iterations: u32,
    tau: f64,
) -> Result<Demonstration, PoolError> {
    let input = promptcodec::render_input(sample);
    let query = promptcodec::render_query();
    let prompt = promptcodec::concat(&[input, query]).expect("two parts");

    let reply = gateway.complete(&ModelRequest::new(prompt.clone()))?;
    let mut value = promptcodec::parse_forecast(&reply.text)
        .map_err(PoolError::UnparseableInitial)?
        .value;

    let mut parse_fallbacks = 0;
    for _ in 0..j_iterations {
        let outcome = refine_once(value, sample, gateway)?;
        if outcome.parse_fallback {
            parse_fallbacks += 1;
        }
        value = outcome.value;
    }

    Ok(Demonstration {
        prompt_text: prompt.text,
        refined_prediction: value,
        regime: label_regime(sample.target, tau),
        source_index: sample.end_index,
        iterations_run: j_iterations,
        parse_fallbacks,
    })
}

/// Selects min(n, |train|) samples uniformly without replacement with the
/// given seed and refines each into a demonstration. A sample whose initial
/// prediction fails is replaced by the next unused training sample so the
/// pool keeps its size. Output is ordered by source_index.
pub fn build_pool<M: Model + ?Sized>(
    train: &[WindowSample],
    gateway: &M,
    n: usize,
    j_iterations: u32,
    tau: f64,
    seed: u64,
    created_from: &str,
) -> Result<DemoPool, PoolError> {
    if train.is_empty() {
        return Err(PoolError::EmptyTrainingSet);
    }
    let target_size = n.min(train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, train.len(), target_size);

    let mut in_queue: Vec<bool> = alloc::vec![false; train.len()];
    let mut queue: Vec<usize> = chosen.into_iter().collect();
    for &i in &queue {
        in_queue[i] = true;
    }
    // Replacement candidates, in training order.
    let mut spares: Vec<usize> = (0..train.len()).filter(|&i| !in_queue[i]).collect();
    spares.reverse(); // pop() yields the earliest unused sample

    let mut demonstrations = Vec::with_capacity(target_size);
    let mut attempted = 0;
    while demonstrations.len() < target_size {
        let Some(idx) = queue.pop() else {
            break;
        };
        attempted += 1;
        match build_demonstration(&train[idx], gateway, j_iterations, tau) {
            Ok(demo) => demonstrations.push(demo),
            Err(PoolError::Gateway(_)) | Err(PoolError::UnparseableInitial(_)) => {
                if let Some(spare) = spares.pop() {
                    queue.push(spare);
                }
            }
            Err(other) => return Err(other),
        }
    }
    if demonstrations.is_empty() {
        return Err(PoolError::AllSkipped { attempted });
    }
    demonstrations.sort_by_key(|d| d.source_index);
    Ok(DemoPool { demonstrations, tau, created_from: String::from(created_from) })
}
