//! Uniform forecaster interface over interchangeable model backends, plus
//! the deterministic mock models used throughout the tests.
//!
//! The remote chat-completion backend and the recording/replay backend live
//! in the std companion crate; everything here is pure.

use alloc::string::{String, ToString};
use core::time::Duration;

use serde::{Deserialize, Serialize};

use crate::promptcodec::{self, PromptText};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempts: {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("service returned status {status} after {attempts} attempts")]
    Service { status: u16, attempts: u32 },
    #[error("configuration error: {0}")]
    Configuration(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub prompt: PromptText,
    /// Fixed at zero for this pipeline.
    pub temperature: f64,
    pub max_reply_tokens: u32,
}

impl ModelRequest {
    pub fn new(prompt: PromptText) -> Self {
        Self { prompt, temperature: 0.0, max_reply_tokens: 256 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelReply {
    pub text: String,
    pub latency: Duration,
    /// 1-based attempt number that produced this reply.
    pub attempt: u32,
}

impl ModelReply {
    pub fn immediate(text: String) -> Self {
        Self { text, latency: Duration::ZERO, attempt: 1 }
    }
}

/// A forecasting backend. Implementations must be safe to call from many
/// threads at once; replies are independent per request.
pub trait Model: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<ModelReply, GatewayError>;
}

/// Deterministic test behaviors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum MockBehavior {
    /// Replies with the last `realized_variance=` value seen in the prompt.
    EchoLastVariance { seed: u64 },
    /// Replies with the true next-day variance, looked up out of band from
    /// the full variance series via the day index in the prompt. Replies
    /// carry full precision so downstream error is exactly zero.
    CheatingOracle { seed: u64 },
    /// During refinement, replies with the midpoint of the previous
    /// prediction and the ground truth, halving the error each step.
    Corrective { seed: u64 },
    /// Always the same value.
    Constant { value: f64, seed: u64 },
}

/// Mock model over a fixed behavior. The cheating variants need the
/// realized-variance series the windows were built from.
pub struct MockModel {
    behavior: MockBehavior,
    variances: alloc::vec::Vec<f64>,
}

impl MockModel {
    pub fn new(behavior: MockBehavior) -> Self {
        Self { behavior, variances: alloc::vec::Vec::new() }
    }

    /// `variances[i]` must be the realized variance at day index `i` of the
    /// returns series used for rendering.
    pub fn with_series(behavior: MockBehavior, variances: alloc::vec::Vec<f64>) -> Self {
        Self { behavior, variances }
    }

    pub fn behavior(&self) -> &MockBehavior {
        &self.behavior
    }
}

fn full_precision(v: f64) -> String {
    alloc::format!("{:e}", v)
}

/// Last number following a `marker` occurrence in the prompt.
fn last_tagged_number(text: &str, marker: &str) -> Option<f64> {
    let pos = text.rfind(marker)?;
    let tail = &text[pos + marker.len()..];
    let end = tail
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == 'e' || c == 'E'))
        .unwrap_or(tail.len());
    promptcodec::parse_forecast(&tail[..end]).ok().map(|p| {
        if p.clamped {
            0.0
        } else {
            p.value
        }
    })
}

/// Raw (unclamped) number after a marker; feedback fields are nonnegative
/// anyway.
fn feedback_field(text: &str, marker: &str) -> Option<f64> {
    last_tagged_number(text, marker)
}

/// Day index of the last `day {i}:` line.
fn last_day_index(text: &str) -> Option<usize> {
    let pos = text.rfind("day ")?;
    let tail = &text[pos + 4..];
    let end = tail.find(':')?;
    tail[..end].trim().parse().ok()
}

impl Model for MockModel {
    fn complete(&self, request: &ModelRequest) -> Result<ModelReply, GatewayError> {
        let prompt = &request.prompt.text;
        let text = match &self.behavior {
            MockBehavior::Constant { value, .. } => full_precision(*value),
            MockBehavior::EchoLastVariance { .. } => {
                last_tagged_number(prompt, "realized_variance=")
                    .map(full_precision)
                    .unwrap_or_else(|| "no variance in prompt".to_string())
            }
            MockBehavior::CheatingOracle { .. } => {
                if let Some(truth) = feedback_field(prompt, "Ground truth: ") {
                    full_precision(truth)
                } else if let Some(day) = last_day_index(prompt) {
                    match self.variances.get(day + 1) {
                        Some(&truth) => full_precision(truth),
                        None => {
                            return Err(GatewayError::Configuration(alloc::format!(
                                "cheating oracle has no variance for day {}",
                                day + 1
                            )))
                        }
                    }
                } else {
                    return Err(GatewayError::Configuration(
                        "cheating oracle needs a day-indexed prompt".to_string(),
                    ));
                }
            }
            MockBehavior::Corrective { .. } => {
                match (
                    feedback_field(prompt, "Ground truth: "),
                    feedback_field(prompt, "Your prediction: "),
                ) {
                    (Some(truth), Some(prev)) => full_precision(0.5 * (prev + truth)),
                    // Initial prediction: echo the most recent variance.
                    _ => last_tagged_number(prompt, "realized_variance=")
                        .map(full_precision)
                        .unwrap_or_else(|| "no variance in prompt".to_string()),
                }
            }
        };
        Ok(ModelReply::immediate(text))
    }
}
