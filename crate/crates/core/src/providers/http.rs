//! Generic JSON-over-HTTP adapter for live generators and QE scorers.
//!
//! Generator: `POST {"source", "prompt_id", "rendered_prompt"}` -> `{"text"}`.
//! Scorer: `POST {"source", "candidate"}` -> `{"score"}`.
//! Anything other than a 2xx with a matching body is a hard error.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{Attempted, Generator, ProviderError, Scorer, SourceItem};
use crate::engine::Candidate;
use crate::prompts::PromptLibrary;

pub const DEFAULT_TIMEOUT_SECS: f64 = 30.0;
pub const DEFAULT_MAX_CONNECTIONS_PER_HOST: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpSettings {
    pub url: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Extra attempts after a transport failure or 5xx; each is counted.
    #[serde(default)]
    pub retries: u32,
    #[serde(default = "default_connections")]
    pub max_connections_per_host: usize,
    /// Language names substituted into `{source}` / `{target}` when rendering prompts.
    #[serde(default)]
    pub source_lang: Option<String>,
    #[serde(default)]
    pub target_lang: Option<String>,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECS
}
fn default_connections() -> usize {
    DEFAULT_MAX_CONNECTIONS_PER_HOST
}

impl HttpSettings {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            retries: 0,
            max_connections_per_host: DEFAULT_MAX_CONNECTIONS_PER_HOST,
            source_lang: None,
            target_lang: None,
        }
    }

    fn agent(&self) -> Result<Agent, ProviderError> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(ProviderError::InvalidConfig(format!(
                "timeout_secs must be > 0, got {}",
                self.timeout_secs
            )));
        }
        if !(self.url.starts_with("http://") || self.url.starts_with("https://")) {
            return Err(ProviderError::InvalidConfig(format!("unsupported url {:?}", self.url)));
        }
        let config = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(self.timeout_secs)))
            .http_status_as_error(false)
            .max_idle_connections_per_host(self.max_connections_per_host.max(1))
            .build();
        Ok(config.into())
    }
}

#[derive(Debug)]
struct Client {
    agent: Agent,
    settings: HttpSettings,
}

enum Failure {
    Retryable(String),
    Fatal(ProviderError),
}

impl Client {
    fn new(settings: HttpSettings) -> Result<Self, ProviderError> {
        Ok(Self {
            agent: settings.agent()?,
            settings,
        })
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<Attempted<R>, ProviderError> {
        let max_attempts = self.settings.retries.saturating_add(1);
        let mut last = String::new();
        for attempt in 1..=max_attempts {
            match self.post_once(body) {
                Ok(value) => return Ok(Attempted { value, attempts: attempt }),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => last = msg,
            }
        }
        Err(ProviderError::Transport {
            attempts: max_attempts,
            message: last,
        })
    }

    fn post_once<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R, Failure> {
        let mut response = self
            .agent
            .post(&self.settings.url)
            .send_json(body)
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(Failure::Retryable(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(ProviderError::Transport {
                attempts: 1,
                message: format!("status {status}"),
            }));
        }
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| Failure::Fatal(ProviderError::Schema(e.to_string())))
    }
}

#[derive(Debug, Serialize)]
struct GenerateRequest<'a> {
    source: &'a str,
    prompt_id: Option<&'a str>,
    rendered_prompt: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateResponse {
    text: String,
}

#[derive(Debug, Serialize)]
struct ScoreRequest<'a> {
    source: &'a str,
    candidate: &'a str,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreResponse {
    score: f64,
}

pub struct HttpGenerator {
    producer_id: String,
    prompt_id: Option<String>,
    client: Client,
    library: Option<Arc<PromptLibrary>>,
}

impl std::fmt::Debug for HttpGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpGenerator")
            .field("producer_id", &self.producer_id)
            .field("prompt_id", &self.prompt_id)
            .field("url", &self.client.settings.url)
            .finish()
    }
}

impl HttpGenerator {
    pub fn new(
        producer_id: String,
        prompt_id: Option<String>,
        settings: HttpSettings,
        library: Option<Arc<PromptLibrary>>,
    ) -> Result<Self, ProviderError> {
        Ok(Self {
            producer_id,
            prompt_id,
            client: Client::new(settings)?,
            library,
        })
    }

    /// Renders the strategy template for this prompt id, if one is registered.
    fn rendered_prompt(&self, source: &SourceItem) -> Result<Option<String>, ProviderError> {
        let (Some(id), Some(library)) = (&self.prompt_id, &self.library) else {
            return Ok(None);
        };
        if library.get(id).is_none() {
            return Ok(None);
        }
        let settings = &self.client.settings;
        let mut vars = HashMap::new();
        vars.insert("source_sentence".to_string(), source.text.clone());
        if let Some(l) = &settings.source_lang {
            vars.insert("source".to_string(), l.clone());
        }
        if let Some(l) = &settings.target_lang {
            vars.insert("target".to_string(), l.clone());
        }
        library
            .render(id, &vars)
            .map(Some)
            .map_err(|e| ProviderError::InvalidConfig(e.to_string()))
    }
}

impl Generator for HttpGenerator {
    fn producer_id(&self) -> &str {
        &self.producer_id
    }

    fn generate(&self, source: &SourceItem) -> Result<Attempted<Candidate>, ProviderError> {
        let request = GenerateRequest {
            source: &source.text,
            prompt_id: self.prompt_id.as_deref(),
            rendered_prompt: self.rendered_prompt(source)?,
        };
        let response: Attempted<GenerateResponse> = self.client.post(&request)?;
        if response.value.text.is_empty() {
            return Err(ProviderError::Schema("empty \"text\"".into()));
        }
        Ok(Attempted {
            value: Candidate::new(self.producer_id.clone(), response.value.text),
            attempts: response.attempts,
        })
    }
}

#[derive(Debug)]
pub struct HttpScorer {
    client: Client,
}

impl HttpScorer {
    pub fn new(settings: HttpSettings) -> Result<Self, ProviderError> {
        Ok(Self {
            client: Client::new(settings)?,
        })
    }
}

impl Scorer for HttpScorer {
    fn score(&self, source: &SourceItem, candidate: &Candidate) -> Result<Attempted<f64>, ProviderError> {
        if candidate.text.is_empty() {
            return Err(ProviderError::EmptyCandidate);
        }
        let response: Attempted<ScoreResponse> = self.client.post(&ScoreRequest {
            source: &source.text,
            candidate: &candidate.text,
        })?;
        if !response.value.score.is_finite() {
            return Err(ProviderError::NonFiniteScore(response.value.score));
        }
        Ok(Attempted {
            value: response.value.score,
            attempts: response.attempts,
        })
    }
}
