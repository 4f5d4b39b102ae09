//! Blocking HTTP clients for the completion and NLI endpoints.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::Serialize;
use serde_json::{json, Value};

use super::{
    BackendError, CompletionRequest, CompletionResponse, LmBackend, NliBackend, NliRequest,
};
use crate::nli::NliDistribution;

/// Bearer token source for both clients.
pub const API_KEY_ENV: &str = "ENTAIL_GUARD_API_KEY";

/// Exponential backoff for connection failures and 5xx replies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Clone)]
struct JsonPoster {
    client: Client,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl JsonPoster {
    fn new() -> Self {
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .expect("HTTP client configuration is static");
        Self {
            client,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            retry: RetryPolicy::default(),
        }
    }

    fn post<T: Serialize>(&self, url: &str, body: &T) -> Result<Value, BackendError> {
        let max = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=max {
            if attempt > 1 {
                thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 2));
            }
            let mut req = self.client.post(url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("POST {url} attempt {attempt}/{max} failed: {e}");
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            let text = resp.text().map_err(|e| BackendError::Transport {
                attempts: attempt,
                message: e.to_string(),
            })?;
            if status.is_server_error() {
                log::warn!("POST {url} attempt {attempt}/{max}: HTTP {status}");
                last = format!("HTTP {status}: {text}");
                continue;
            }
            if status == reqwest::StatusCode::NOT_FOUND {
                return Err(BackendError::NotFound(text));
            }
            if !status.is_success() {
                return Err(BackendError::Status {
                    status: status.as_u16(),
                    body: text,
                });
            }
            return serde_json::from_str(&text)
                .map_err(|e| BackendError::MalformedResponse(format!("invalid JSON: {e}")));
        }
        Err(BackendError::Transport {
            attempts: max,
            message: last,
        })
    }
}

fn join(base: &str, path: &str) -> String {
    format!("{}{}", base.trim_end_matches('/'), path)
}

/// Client for `POST /v1/completions`.
#[derive(Debug, Clone)]
pub struct HttpLm {
    url: String,
    poster: JsonPoster,
}

impl HttpLm {
    /// `base_url` is the server root, e.g. `http://127.0.0.1:8099`.
    pub fn new(base_url: &str) -> Self {
        Self {
            url: join(base_url, "/v1/completions"),
            poster: JsonPoster::new(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.poster.retry = retry;
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.poster.api_key = key;
        self
    }
}

impl LmBackend for HttpLm {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let body = self.poster.post(&self.url, req)?;
        parse_completion(&body)
    }
}

pub(crate) fn parse_completion(body: &Value) -> Result<CompletionResponse, BackendError> {
    let text = body
        .pointer("/choices/0/text")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].text".into()))?;
    let usage = |field: &str| {
        body.pointer(&format!("/usage/{field}"))
            .and_then(Value::as_u64)
            .map(|v| v as u32)
    };
    Ok(CompletionResponse {
        text: text.to_string(),
        prompt_tokens: usage("prompt_tokens"),
        completion_tokens: usage("completion_tokens"),
    })
}

/// Client for `POST /nli`.
#[derive(Debug, Clone)]
pub struct HttpNli {
    url: String,
    poster: JsonPoster,
}

impl HttpNli {
    pub fn new(base_url: &str) -> Self {
        Self {
            url: join(base_url, "/nli"),
            poster: JsonPoster::new(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.poster.retry = retry;
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.poster.api_key = key;
        self
    }
}

impl NliBackend for HttpNli {
    fn classify(&self, req: &NliRequest) -> Result<NliDistribution, BackendError> {
        let body = self.poster.post(
            &self.url,
            &json!({"premise": req.premise, "hypothesis": req.hypothesis}),
        )?;
        parse_distribution(&body)
    }
}

pub(crate) fn parse_distribution(body: &Value) -> Result<NliDistribution, BackendError> {
    let field = |name: &str| {
        body.get(name)
            .and_then(Value::as_f64)
            .ok_or_else(|| BackendError::MalformedResponse(format!("missing numeric `{name}`")))
    };
    NliDistribution::new(field("contradiction")?, field("neutral")?, field("entailment")?)
        .map_err(|e| BackendError::MalformedResponse(e.to_string()))
}
