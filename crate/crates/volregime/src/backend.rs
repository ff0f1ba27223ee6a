//! Model backends with IO: the remote chat-completion service, the
//! recording/replay pair that lets full-pipeline runs replay offline, and a
//! forbidding stub that proves a code path performs no model calls.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use volregime_core::gateway::{GatewayError, Model, ModelReply, ModelRequest};

pub const API_KEY_ENV: &str = "VOLREGIME_API_KEY";

/// Fixed system instruction sent with every remote request.
pub const SYSTEM_INSTRUCTION: &str = "You are a precise numerical forecasting assistant. Follow the task instructions exactly and end your reply with a single number.";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model_name: String,
    pub timeout: Duration,
    pub max_retries: u32,
}

pub struct RemoteModel {
    config: RemoteConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl RemoteModel {
    /// Reads the credential from `VOLREGIME_API_KEY`; fails before any
    /// network activity if it is unset.
    pub fn from_env(config: RemoteConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(API_KEY_ENV).map_err(|_| {
            GatewayError::Configuration(format!("environment variable {API_KEY_ENV} is not set"))
        })?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, api_key, agent })
    }

    fn backoff(attempt: u32) -> Duration {
        // 1s, 2s, 4s, ...
        Duration::from_secs(1u64 << attempt.min(6))
    }

    fn post_once(&self, body: &str) -> Result<(u16, String), String> {
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, text))
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

impl Model for RemoteModel {
    fn complete(&self, request: &ModelRequest) -> Result<ModelReply, GatewayError> {
        let body = serde_json::json!({
            "model": self.config.model_name,
            "messages": [
                ChatMessage { role: "system", content: SYSTEM_INSTRUCTION },
                ChatMessage { role: "user", content: &request.prompt.text },
            ],
            "temperature": request.temperature,
        })
        .to_string();

        let start = Instant::now();
        let mut last_detail = String::new();
        let mut last_status: Option<u16> = None;
        let attempts = self.config.max_retries + 1;
        for attempt in 1..=attempts {
            match self.post_once(&body) {
                Ok((status, text)) if (200..300).contains(&status) => {
                    let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| {
                        GatewayError::Transport {
                            attempts: attempt,
                            detail: format!("malformed reply body: {e}"),
                        }
                    })?;
                    let content = parsed
                        .choices
                        .into_iter()
                        .next()
                        .map(|c| c.message.content)
                        .ok_or_else(|| GatewayError::Transport {
                            attempts: attempt,
                            detail: "reply carried no choices".into(),
                        })?;
                    return Ok(ModelReply { text: content, latency: start.elapsed(), attempt });
                }
                Ok((status, _)) => {
                    last_status = Some(status);
                    // Client errors other than rate limiting will not heal.
                    if (400..500).contains(&status) && status != 429 {
                        return Err(GatewayError::Service { status, attempts: attempt });
                    }
                }
                Err(detail) => last_detail = detail,
            }
            if attempt < attempts {
                thread::sleep(Self::backoff(attempt - 1));
            }
        }
        match last_status {
            Some(status) => Err(GatewayError::Service { status, attempts }),
            None => Err(GatewayError::Transport { attempts, detail: last_detail }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: String,
    pub reply: String,
}

/// Wraps another backend and keeps every request/reply pair, both for
/// offline replay files and for asserting the exact bytes sent.
pub struct RecordingModel<M> {
    inner: M,
    exchanges: Mutex<Vec<Exchange>>,
}

impl<M: Model> RecordingModel<M> {
    pub fn new(inner: M) -> Self {
        Self { inner, exchanges: Mutex::new(Vec::new()) }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.exchanges.lock().expect("recording lock").clone()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let exchanges = self.exchanges();
        let json = serde_json::to_string_pretty(&exchanges).expect("exchanges serialize");
        std::fs::write(path, json)
    }
}

impl<M: Model> Model for RecordingModel<M> {
    fn complete(&self, request: &ModelRequest) -> Result<ModelReply, GatewayError> {
        let reply = self.inner.complete(request)?;
        self.exchanges.lock().expect("recording lock").push(Exchange {
            prompt: request.prompt.text.clone(),
            reply: reply.text.clone(),
        });
        Ok(reply)
    }
}

/// Serves replies from a recording file, keyed by exact prompt bytes.
pub struct ReplayModel {
    replies: HashMap<String, String>,
}

impl ReplayModel {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let exchanges: Vec<Exchange> = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self {
            replies: exchanges.into_iter().map(|e| (e.prompt, e.reply)).collect(),
        })
    }
}

impl Model for ReplayModel {
    fn complete(&self, request: &ModelRequest) -> Result<ModelReply, GatewayError> {
        self.replies
            .get(&request.prompt.text)
            .map(|reply| ModelReply::immediate(reply.clone()))
            .ok_or_else(|| {
                GatewayError::Configuration("prompt not present in the replay file".into())
            })
    }
}

/// Errors on any call; used to prove the classical-baseline path performs
/// no model activity.
pub struct ForbiddingModel;

impl Model for ForbiddingModel {
    fn complete(&self, _: &ModelRequest) -> Result<ModelReply, GatewayError> {
        Err(GatewayError::Configuration(
            "model call on a path that must not touch a backend".into(),
        ))
    }
}
