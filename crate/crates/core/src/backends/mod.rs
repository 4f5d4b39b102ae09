//! Language-model and NLI backends.
//!
//! Both backend traits are synchronous and `Send + Sync` so a single
//! instance can be shared by every batch worker.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nli::NliDistribution;

mod cache;
mod http;
mod mock;
mod server;

pub use cache::{cached, CacheStats, CachedNli, CacheSnapshot};
pub use http::{HttpLm, HttpNli, RetryPolicy, API_KEY_ENV};
pub use mock::{LmScript, NliTable, NoNli, PairEntry, RuleEntry, ScriptSelect, ScriptedLm};
pub use server::{MockServer, ServeError, ServerFixture};

/// Characters per token used when the server has not reported a prompt size.
pub const CHARS_PER_TOKEN: usize = 4;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("token budget exhausted: prompt needs ~{prompt_tokens} tokens but the total budget is {max_total_tokens}")]
    Budget {
        max_total_tokens: u32,
        prompt_tokens: u32,
    },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("server returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub top_p: f64,
    pub temperature: f64,
    /// Token budget including the prompt.
    pub max_total_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            top_p: 0.96,
            temperature: 1.0,
            max_total_tokens: 128,
            seed: None,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidRequest(format!(
                "top_p {} is outside (0, 1]",
                self.top_p
            )));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} is negative",
                self.temperature
            )));
        }
        if self.max_total_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_total_tokens must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A single generation call as it goes over the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub top_p: f64,
    pub temperature: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    /// Continuation only; never includes the prompt.
    pub text: String,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NliRequest {
    pub premise: String,
    pub hypothesis: String,
}

impl NliRequest {
    /// Trims both sides; empty texts are rejected.
    pub fn new(premise: &str, hypothesis: &str) -> Result<Self, BackendError> {
        let premise = premise.trim();
        let hypothesis = hypothesis.trim();
        if premise.is_empty() {
            return Err(BackendError::InvalidRequest("premise is empty".into()));
        }
        if hypothesis.is_empty() {
            return Err(BackendError::InvalidRequest("hypothesis is empty".into()));
        }
        Ok(Self {
            premise: premise.to_string(),
            hypothesis: hypothesis.to_string(),
        })
    }
}

pub trait LmBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

pub trait NliBackend: Send + Sync {
    fn classify(&self, req: &NliRequest) -> Result<NliDistribution, BackendError>;
}

impl<T: LmBackend + ?Sized> LmBackend for &T {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }
}

impl<T: LmBackend + ?Sized> LmBackend for Box<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }
}

impl<T: LmBackend + ?Sized> LmBackend for Arc<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }
}

impl<T: NliBackend + ?Sized> NliBackend for &T {
    fn classify(&self, req: &NliRequest) -> Result<NliDistribution, BackendError> {
        (**self).classify(req)
    }
}

impl<T: NliBackend + ?Sized> NliBackend for Box<T> {
    fn classify(&self, req: &NliRequest) -> Result<NliDistribution, BackendError> {
        (**self).classify(req)
    }
}

impl<T: NliBackend + ?Sized> NliBackend for Arc<T> {
    fn classify(&self, req: &NliRequest) -> Result<NliDistribution, BackendError> {
        (**self).classify(req)
    }
}

/// `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> u32 {
    text.chars().count().div_ceil(CHARS_PER_TOKEN) as u32
}

/// New-token allowance under a total budget that includes the prompt.
/// A server-reported prompt size, when known, replaces the estimate.
pub fn new_token_budget(
    prompt: &str,
    max_total_tokens: u32,
    reported_prompt_tokens: Option<u32>,
) -> Result<u32, BackendError> {
    let prompt_tokens = reported_prompt_tokens.unwrap_or_else(|| estimate_tokens(prompt));
    if max_total_tokens <= prompt_tokens {
        return Err(BackendError::Budget {
            max_total_tokens,
            prompt_tokens,
        });
    }
    Ok(max_total_tokens - prompt_tokens)
}

/// Issues one completion for `prompt`, budgeting against the prompt itself.
pub fn lm_complete(
    lm: &dyn LmBackend,
    prompt: &str,
    params: &SamplingParams,
) -> Result<CompletionResponse, BackendError> {
    params.validate()?;
    let max_tokens = new_token_budget(prompt, params.max_total_tokens, None)?;
    lm.complete(&CompletionRequest {
        prompt: prompt.to_string(),
        max_tokens,
        top_p: params.top_p,
        temperature: params.temperature,
        seed: params.seed,
    })
}

pub fn nli_classify(
    nli: &dyn NliBackend,
    premise: &str,
    hypothesis: &str,
) -> Result<NliDistribution, BackendError> {
    nli.classify(&NliRequest::new(premise, hypothesis)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_estimate_rounds_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
        assert_eq!(estimate_tokens(&"x".repeat(300)), 75);
    }

    #[test]
    fn budget_subtracts_prompt() {
        let prompt = "x".repeat(300);
        assert_eq!(new_token_budget(&prompt, 256, None).unwrap(), 181);
        assert_eq!(new_token_budget(&prompt, 256, Some(70)).unwrap(), 186);
        assert!(matches!(
            new_token_budget(&prompt, 75, None),
            Err(BackendError::Budget { prompt_tokens: 75, .. })
        ));
    }

    #[test]
    fn nli_request_rejects_blank() {
        assert!(NliRequest::new("  ", "x").is_err());
        assert!(NliRequest::new("x", "\n").is_err());
        assert_eq!(NliRequest::new(" a ", "b").unwrap().premise, "a");
    }

    #[test]
    fn params_validation() {
        let mut p = SamplingParams::default();
        assert!(p.validate().is_ok());
        p.top_p = 0.0;
        assert!(p.validate().is_err());
        p.top_p = 1.0;
        p.max_total_tokens = 0;
        assert!(p.validate().is_err());
    }
}
