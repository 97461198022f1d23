//! HTTP client for the scoring wire protocol.
//!
//! ```text
//! GET  /health                                    -> 200
//! GET  /v1/models                                 -> {models: [{id, context_limit, bos_policy?}]}
//! POST /v1/score        {model, prefix, continuation}
//!                       -> {tokens, logprobs, offsets: [[s, e], ...], context_limit}
//! POST /v1/batch_score  {model, requests: [{prefix, continuation}, ...]}
//!                       -> {results: [...]}   (same order as requests)
//! ```
//!
//! Offsets are character indices into `continuation`; log-probabilities are
//! natural logs. A 413 response means the request overflowed the model's
//! context window.

use std::collections::HashMap;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendInfo, ScoreRequest, ScoredSequence, ScoringBackend};
use crate::error::{Error, Result};

const ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteModel {
    pub id: String,
    pub context_limit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bos_policy: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ModelsResponse {
    models: Vec<RemoteModel>,
}

#[derive(Debug, Serialize)]
struct ScoreBody<'a> {
    model: &'a str,
    prefix: &'a str,
    continuation: &'a str,
}

#[derive(Debug, Serialize)]
struct BatchItem<'a> {
    prefix: &'a str,
    continuation: &'a str,
}

#[derive(Debug, Serialize)]
struct BatchBody<'a> {
    model: &'a str,
    requests: Vec<BatchItem<'a>>,
}

#[derive(Debug, Deserialize)]
struct ScoreResponse {
    tokens: Vec<String>,
    logprobs: Vec<f64>,
    offsets: Vec<(usize, usize)>,
    #[serde(default)]
    #[allow(dead_code)]
    context_limit: Option<usize>,
}

impl From<ScoreResponse> for ScoredSequence {
    fn from(r: ScoreResponse) -> Self {
        ScoredSequence {
            tokens: r.tokens,
            logprobs: r.logprobs,
            offsets: r.offsets,
        }
    }
}

#[derive(Debug, Deserialize)]
struct BatchResponse {
    results: Vec<ScoreResponse>,
}

/// A model served over HTTP.
#[derive(Debug)]
pub struct RemoteBackend {
    base_url: String,
    model: RemoteModel,
    agent: ureq::Agent,
    max_concurrency: usize,
    backoff: Duration,
    token_counts: Mutex<HashMap<String, usize>>,
}

impl RemoteBackend {
    /// Checks `/health`, then looks `model_id` up in `/v1/models`.
    pub fn connect(base_url: &str, model_id: &str, max_concurrency: usize) -> Result<Self> {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(5))
            .timeout(Duration::from_secs(300))
            .build();
        let base_url = base_url.trim_end_matches('/').to_string();
        let mut backend = RemoteBackend {
            base_url,
            model: RemoteModel {
                id: model_id.to_string(),
                context_limit: 0,
                bos_policy: None,
            },
            agent,
            max_concurrency: max_concurrency.max(1),
            backoff: Duration::from_millis(200),
            token_counts: Mutex::new(HashMap::new()),
        };
        backend.health()?;
        let models: ModelsResponse = backend
            .with_retries(|| backend.agent.get(&backend.url("/v1/models")).call())?
            .into_json()
            .map_err(|e| Error::Backend(format!("bad /v1/models response: {e}")))?;
        backend.model = models
            .models
            .into_iter()
            .find(|m| m.id == model_id)
            .ok_or_else(|| {
                Error::Backend(format!(
                    "model {model_id:?} is not served at {}",
                    backend.base_url
                ))
            })?;
        Ok(backend)
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn model(&self) -> &RemoteModel {
        &self.model
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url)
    }

    pub fn health(&self) -> Result<()> {
        self.with_retries(|| self.agent.get(&self.url("/health")).call())
            .map(|_| ())
    }

    /// Runs `call`, retrying transport failures and 5xx responses with
    /// exponential backoff.
    fn with_retries<F>(&self, call: F) -> Result<ureq::Response>
    where
        F: Fn() -> std::result::Result<ureq::Response, ureq::Error>,
    {
        let mut delay = self.backoff;
        let mut last = None;
        for attempt in 0..ATTEMPTS {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match call() {
                Ok(resp) => return Ok(resp),
                Err(ureq::Error::Status(code, resp)) if code >= 500 => {
                    let body = resp.into_string().unwrap_or_default();
                    last = Some(Error::Backend(format!("HTTP {code}: {body}")));
                }
                Err(ureq::Error::Status(code, resp)) => return Err(self.status_error(code, resp)),
                Err(ureq::Error::Transport(t)) => {
                    last = Some(Error::BackendUnreachable(format!("{}: {t}", self.base_url)));
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn status_error(&self, code: u16, resp: ureq::Response) -> Error {
        let body = resp.into_string().unwrap_or_default();
        match code {
            413 => {
                // The body names the limit; fall back to the advertised one.
                let limit = serde_json::from_str::<serde_json::Value>(&body)
                    .ok()
                    .and_then(|v| v.get("context_limit").and_then(|l| l.as_u64()))
                    .map(|l| l as usize)
                    .unwrap_or(self.model.context_limit);
                let needed = serde_json::from_str::<serde_json::Value>(&body)
                    .ok()
                    .and_then(|v| v.get("needed").and_then(|l| l.as_u64()))
                    .map(|l| l as usize)
                    .unwrap_or(limit + 1);
                Error::ContextOverflow { needed, limit }
            }
            404 => Error::Backend(format!("unknown model {:?}: {body}", self.model.id)),
            _ => Error::Backend(format!("HTTP {code}: {body}")),
        }
    }
}

impl ScoringBackend for RemoteBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            backend_id: format!("remote:{}", self.model.id),
            context_limit: self.model.context_limit,
            max_concurrency: self.max_concurrency,
            bos_prepended: self.model.bos_policy.as_deref() != Some("never"),
        }
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoredSequence> {
        let body = ScoreBody {
            model: &self.model.id,
            prefix: &req.prefix,
            continuation: &req.continuation,
        };
        let resp: ScoreResponse = self
            .with_retries(|| self.agent.post(&self.url("/v1/score")).send_json(&body))?
            .into_json()
            .map_err(|e| Error::Backend(format!("bad /v1/score response: {e}")))?;
        Ok(resp.into())
    }

    fn score_batch(&self, reqs: &[ScoreRequest]) -> Result<Vec<ScoredSequence>> {
        let body = BatchBody {
            model: &self.model.id,
            requests: reqs
                .iter()
                .map(|r| BatchItem {
                    prefix: &r.prefix,
                    continuation: &r.continuation,
                })
                .collect(),
        };
        let resp: BatchResponse = self
            .with_retries(|| {
                self.agent
                    .post(&self.url("/v1/batch_score"))
                    .send_json(&body)
            })?
            .into_json()
            .map_err(|e| Error::Backend(format!("bad /v1/batch_score response: {e}")))?;
        if resp.results.len() != reqs.len() {
            return Err(Error::Backend(format!(
                "batch of {} requests returned {} results",
                reqs.len(),
                resp.results.len()
            )));
        }
        Ok(resp.results.into_iter().map(Into::into).collect())
    }

    /// Token count as reported by scoring `text` with no prefix.
    fn count_tokens(&self, text: &str) -> Result<usize> {
        if text.is_empty() {
            return Ok(0);
        }
        if let Some(&n) = self.token_counts.lock().expect("poisoned").get(text) {
            return Ok(n);
        }
        let n = self
            .score(&ScoreRequest::new(self.model.id.clone(), "", text))?
            .tokens
            .len();
        self.token_counts
            .lock()
            .expect("poisoned")
            .insert(text.to_string(), n);
        Ok(n)
    }
}
