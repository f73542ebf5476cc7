//! Chat-completion style HTTP endpoint.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{DecodingControls, ModelClient, ModelRequest, ModelResponse, Reply, TransportErrorKind};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpClientConfig {
    /// e.g. `https://api.example.com/v1`; requests go to `<base_url>/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub auth_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Send `label_bias` as a string-keyed `logit_bias` map. Endpoints that
    /// expect token ids should leave this off; the bias is then ignored.
    #[serde(default)]
    pub send_label_bias: bool,
}

fn default_timeout() -> u64 {
    60
}

pub struct HttpClient {
    config: HttpClientConfig,
    url: String,
    token: String,
    http: reqwest::blocking::Client,
    warned_bias: AtomicBool,
}

impl HttpClient {
    /// Fails when the token variable is unset or the base URL is unusable.
    pub fn from_env(config: HttpClientConfig) -> Result<Self> {
        let token = std::env::var(&config.auth_env).map_err(|_| {
            Error::Config(format!("auth environment variable `{}` is not set", config.auth_env))
        })?;
        Self::with_token(config, token)
    }

    pub fn with_token(config: HttpClientConfig, token: String) -> Result<Self> {
        let base = config.base_url.trim_end_matches('/');
        let url = format!("{base}/chat/completions");
        let parsed = reqwest::Url::parse(&url)
            .map_err(|e| Error::Config(format!("bad endpoint `{}`: {e}", config.base_url)))?;
        if !matches!(parsed.scheme(), "http" | "https") {
            return Err(Error::Config(format!("endpoint `{}` is not http(s)", config.base_url)));
        }
        if config.model.trim().is_empty() {
            return Err(Error::Config("model name is empty".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self { config, url, token, http, warned_bias: AtomicBool::new(false) })
    }

    pub fn request_body(&self, prompt: &str, controls: &DecodingControls) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": controls.temperature,
            "max_tokens": controls.max_output_tokens,
        });
        if !controls.label_bias.is_empty() {
            if self.config.send_label_bias {
                let bias: Map<String, Value> = controls
                    .label_bias
                    .iter()
                    .map(|b| (b.text.clone(), json!(b.weight)))
                    .collect();
                body["logit_bias"] = Value::Object(bias);
            } else if !self.warned_bias.swap(true, Ordering::Relaxed) {
                log::warn!("endpoint cannot express label bias; ignoring {} entries", controls.label_bias.len());
            }
        }
        if !controls.stop.is_empty() {
            body["stop"] = json!(controls.stop);
        }
        body
    }
}

/// Interpret an HTTP status and body from a chat-completion endpoint.
pub fn parse_response(status: u16, body: &str) -> ModelResponse {
    let transport = |kind, message: String| ModelResponse::TransportError { kind, message };
    match status {
        200..=299 => {}
        429 => return transport(TransportErrorKind::RateLimited, format!("HTTP 429: {body}")),
        500..=599 => return transport(TransportErrorKind::Server, format!("HTTP {status}: {body}")),
        _ => return transport(TransportErrorKind::Client, format!("HTTP {status}: {body}")),
    }
    let Ok(value) = serde_json::from_str::<Value>(body) else {
        return transport(TransportErrorKind::Protocol, "response is not JSON".into());
    };
    let Some(choice) = value.get("choices").and_then(|c| c.get(0)) else {
        return transport(TransportErrorKind::Protocol, "response has no choices".into());
    };
    let message = choice.get("message");
    if let Some(refusal) = message.and_then(|m| m.get("refusal")).and_then(Value::as_str) {
        return ModelResponse::Refusal(refusal.to_string());
    }
    if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
        return ModelResponse::Refusal("content_filter".into());
    }
    match message.and_then(|m| m.get("content")).and_then(Value::as_str) {
        Some(text) => ModelResponse::Text(text.to_string()),
        None => transport(TransportErrorKind::Protocol, "choice has no message content".into()),
    }
}

impl ModelClient for HttpClient {
    fn identifier(&self) -> String {
        format!("{}@{}", self.config.model, self.config.base_url)
    }

    fn send(&self, request: &ModelRequest<'_>) -> Reply {
        let body = self.request_body(request.prompt, request.controls);
        let request_body = body.to_string();
        let result = self
            .http
            .post(&self.url)
            .bearer_auth(&self.token)
            .header("content-type", "application/json")
            .body(request_body.clone())
            .send();
        let (response, response_body) = match result {
            Ok(resp) => {
                let status = resp.status().as_u16();
                match resp.text() {
                    Ok(text) => (parse_response(status, &text), Some(text)),
                    Err(e) => (
                        ModelResponse::TransportError {
                            kind: TransportErrorKind::Protocol,
                            message: e.to_string(),
                        },
                        None,
                    ),
                }
            }
            Err(e) => {
                let kind = if e.is_timeout() {
                    TransportErrorKind::Timeout
                } else {
                    TransportErrorKind::Connection
                };
                (ModelResponse::TransportError { kind, message: e.to_string() }, None)
            }
        };
        Reply { response, request_body: Some(request_body), response_body }
    }
}
