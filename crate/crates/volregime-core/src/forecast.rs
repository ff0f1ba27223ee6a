//! Test-time forecasting: the one-shot prompt baseline and the single-shot
//! in-context forecast over sampled demonstrations.

use alloc::vec::Vec;

use crate::evaluator::{Forecast, RecordFlags};
use crate::gateway::{GatewayError, Model, ModelRequest};
use crate::marketdata::WindowSample;
use crate::pool::DemoPool;
use crate::promptcodec::{self, PromptError};
use crate::sampler::{self, SamplerConfig, Selection, Strategy};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForecastError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Sampler(#[from] sampler::SamplerError),
}

/// Direct prediction from the input window, no demonstrations.
pub fn one_shot_forecast<M: Model + ?Sized>(
    window: &WindowSample,
    gateway: &M,
) -> Result<Forecast, ForecastError> {
    let prompt = promptcodec::concat(&[promptcodec::render_input(window), promptcodec::render_query()])?;
    let reply = gateway.complete(&ModelRequest::new(prompt))?;
    let parsed = promptcodec::parse_forecast(&reply.text)?;
    Ok(Forecast {
        value: parsed.value,
        flags: RecordFlags { clamped: parsed.clamped, ..Default::default() },
    })
}

/// One ICL prediction: select demonstrations for this window, prepend their
/// blocks to the rendered input and query, and parse the single reply.
/// Returns the forecast together with the audit trail of chosen pool
/// source indices.
pub fn icl_forecast<M: Model + ?Sized>(
    window: &WindowSample,
    pool: &DemoPool,
    config: &SamplerConfig,
    gateway: &M,
) -> Result<(Forecast, Vec<usize>), ForecastError> {
    config.validate()?;
    let seed = sampler::derive_seed(config.seed, window.end_index);
    let selection: Selection = match config.strategy {
        Strategy::Random => sampler::sample_random(pool, config.k, seed),
        Strategy::FixedPrior => sampler::sample_fixed_prior(pool, config.k, config.alpha, seed),
        Strategy::LabelEstimate => {
            sampler::sample_label_estimate(pool, window, config, seed)?.0
        }
    };

    let mut parts = Vec::with_capacity(selection.indices.len() + 2);
    for &i in &selection.indices {
        let demo = &pool.demonstrations[i];
        parts.push(promptcodec::render_demonstration(&demo.prompt_text, demo.refined_prediction));
    }
    parts.push(promptcodec::render_input(window));
    parts.push(promptcodec::render_query());
    let prompt = promptcodec::concat(&parts)?;

    let reply = gateway.complete(&ModelRequest::new(prompt))?;
    let parsed = promptcodec::parse_forecast(&reply.text)?;
    let sources = selection.indices.iter().map(|&i| pool.demonstrations[i].source_index).collect();
    Ok((
        Forecast {
            value: parsed.value,
            flags: RecordFlags {
                clamped: parsed.clamped,
                shortfall: selection.shortfall > 0,
                ..Default::default()
            },
        },
        sources,
    ))
}
