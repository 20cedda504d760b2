//! Blocking JSON-over-HTTP clients for the external embedding and
//! chat-completion services.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tracing::debug;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("service unreachable: {0}")]
    Unreachable(String),
    #[error("service returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed service reply: {0}")]
    Malformed(String),
    #[error("service not configured: {0}")]
    NotConfigured(String),
}

impl ServiceError {
    fn is_transient(&self) -> bool {
        match self {
            ServiceError::Unreachable(_) => true,
            ServiceError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Retries after the first attempt for transient failures.
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each subsequent retry.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl ServiceConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key: None,
            max_retries: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
        }
    }

    /// Reads `<prefix>_URL`, `<prefix>_MODEL` and `<prefix>_KEY`.
    /// Only the URL is mandatory.
    pub fn from_env(prefix: &str) -> Result<Self, ServiceError> {
        let var = |name: &str| {
            std::env::var(format!("{prefix}_{name}"))
                .ok()
                .filter(|v| !v.is_empty())
        };
        let url = var("URL")
            .ok_or_else(|| ServiceError::NotConfigured(format!("{prefix}_URL is not set")))?;
        let mut cfg = Self::new(url, var("MODEL").unwrap_or_default());
        cfg.api_key = var("KEY");
        Ok(cfg)
    }
}

/// POSTs JSON bodies to one endpoint with bearer auth and exponential
/// backoff on transient failures.
#[derive(Debug, Clone)]
pub struct JsonService {
    client: reqwest::blocking::Client,
    config: ServiceConfig,
}

impl JsonService {
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ServiceError::Unreachable(e.to_string()))?;
        Ok(Self { client, config })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn post(&self, body: &Value) -> Result<Value, ServiceError> {
        let mut attempt = 0;
        loop {
            match self.post_once(body) {
                Err(e) if e.is_transient() && attempt < self.config.max_retries => {
                    let delay = self.config.backoff * 2u32.pow(attempt);
                    debug!(error = %e, ?delay, attempt, "retrying request");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post_once(&self, body: &Value) -> Result<Value, ServiceError> {
        let mut request = self.client.post(&self.config.url).json(body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| ServiceError::Unreachable(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| ServiceError::Unreachable(e.to_string()))?;
        if !status.is_success() {
            return Err(ServiceError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| ServiceError::Malformed(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Client for a chat-completion endpoint (`{"model", "messages"}` in,
/// `choices[0].message.content` out).
#[derive(Debug, Clone)]
pub struct ChatClient {
    service: JsonService,
}

impl ChatClient {
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        Ok(Self {
            service: JsonService::new(config)?,
        })
    }

    pub fn from_env() -> Result<Self, ServiceError> {
        Self::new(ServiceConfig::from_env("HELP_LLM")?)
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, ServiceError> {
        let body = json!({
            "model": self.service.config().model,
            "messages": messages,
            "temperature": 0,
        });
        let reply = self.service.post(&body)?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| ServiceError::Malformed("missing choices[0].message.content".into()))
    }
}
