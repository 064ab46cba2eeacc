//! HTTP client for the `/v1/score` protocol.
//!
//! Request: `{"model": "<id>", "revision": "<step>", "text": "<utf8>"}`.
//! Response: `{"model":..., "revision":..., "tokens":[{"id","text","start","end","logprob"}]}`
//! with a `null` logprob on the first token. Errors come back as
//! `{"error": "<message>"}` with a 4xx/5xx status.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{LogprobProvider, ScoredText, TokenScore};
use crate::error::{Error, Result};

pub const PROVIDER_URL_ENV: &str = "REPROBE_PROVIDER_URL";
const MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderEndpoint {
    pub base_url: String,
    pub model_id: String,
    pub revision: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_inflight")]
    pub max_inflight: usize,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_inflight() -> usize {
    4
}

impl ProviderEndpoint {
    pub fn new(base_url: &str, model_id: &str, revision: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model_id: model_id.to_string(),
            revision: revision.to_string(),
            timeout_secs: default_timeout(),
            max_inflight: default_inflight(),
        }
    }

    /// Endpoint whose base URL comes from `REPROBE_PROVIDER_URL`.
    pub fn from_env(model_id: &str, revision: &str) -> Result<Self> {
        let url = std::env::var(PROVIDER_URL_ENV)
            .map_err(|_| Error::Invalid(format!("{PROVIDER_URL_ENV} is not set")))?;
        Ok(Self::new(&url, model_id, revision))
    }

    pub fn with_revision(&self, revision: &str) -> Self {
        Self {
            revision: revision.to_string(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_inflight == 0 {
            return Err(Error::Invalid("max_inflight must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Invalid("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn score_url(&self) -> String {
        format!("{}/v1/score", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub model: String,
    pub revision: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub model: String,
    pub revision: String,
    pub tokens: Vec<TokenScore>,
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    error: String,
}

impl ScoreResponse {
    pub fn into_scored(self, text: &str) -> ScoredText {
        ScoredText {
            text: text.to_string(),
            model_id: self.model,
            revision: self.revision,
            tokens: self.tokens,
        }
    }

    pub fn from_scored(scored: &ScoredText) -> Self {
        Self {
            model: scored.model_id.clone(),
            revision: scored.revision.clone(),
            tokens: scored.tokens.clone(),
        }
    }
}

/// Blocking client for one (model, revision) pair.
pub struct HttpProvider {
    endpoint: ProviderEndpoint,
    client: reqwest::blocking::Client,
    backoff: Duration,
}

impl HttpProvider {
    pub fn new(endpoint: ProviderEndpoint) -> Result<Self> {
        endpoint.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build()
            .map_err(|e| Error::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self {
            endpoint,
            client,
            backoff: Duration::from_millis(250),
        })
    }

    /// Base delay of the exponential backoff (doubling per retry).
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn endpoint(&self) -> &ProviderEndpoint {
        &self.endpoint
    }

    pub fn request_for(&self, text: &str) -> ScoreRequest {
        ScoreRequest {
            model: self.endpoint.model_id.clone(),
            revision: self.endpoint.revision.clone(),
            text: text.to_string(),
        }
    }

    /// Scores `text`, tagging protocol errors with `context` (usually a vignette id).
    pub fn score_with_context(&self, text: &str, context: &str) -> Result<ScoredText> {
        if text.is_empty() {
            return Err(Error::Invalid("cannot score empty text".into()));
        }
        let request = self.request_for(text);
        let mut last_err = String::new();
        for attempt in 0..=MAX_RETRIES {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let resp = match self.client.post(self.endpoint.score_url()).json(&request).send() {
                Ok(r) => r,
                Err(e) => {
                    last_err = e.to_string();
                    log::warn!("score request for {context} failed (attempt {}): {e}", attempt + 1);
                    continue;
                }
            };
            let status = resp.status();
            let body = match resp.bytes() {
                Ok(b) => b,
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            };
            if status.as_u16() == 503 {
                last_err = "service unavailable".into();
                continue;
            }
            if !status.is_success() {
                let message = serde_json::from_slice::<ErrorBody>(&body)
                    .map(|b| b.error)
                    .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
                return Err(Error::Server {
                    status: status.as_u16(),
                    message,
                });
            }
            let parsed: ScoreResponse =
                serde_json::from_slice(&body).map_err(|e| Error::Protocol {
                    context: context.to_string(),
                    token_index: 0,
                    message: format!("malformed response: {e}"),
                })?;
            let scored = parsed.into_scored(text);
            scored.validate(context)?;
            return Ok(scored);
        }
        Err(Error::Transport {
            attempts: MAX_RETRIES + 1,
            message: last_err,
        })
    }
}

impl LogprobProvider for HttpProvider {
    fn model_id(&self) -> &str {
        &self.endpoint.model_id
    }

    fn revision(&self) -> &str {
        &self.endpoint.revision
    }

    fn score_text(&self, text: &str) -> Result<ScoredText> {
        self.score_with_context(text, "request")
    }

    fn score_labeled(&self, label: &str, text: &str) -> Result<ScoredText> {
        self.score_with_context(text, label)
    }
}
