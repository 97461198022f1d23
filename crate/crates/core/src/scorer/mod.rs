//! Conditional log-probabilities of a continuation given a prefix.
//!
//! A [`ScoringBackend`] reports per-token log-probabilities together with
//! character offsets into the continuation. The harness never tokenizes text
//! for scoring itself; it only aggregates what the backend reports.

mod cache;
mod reference;
mod remote;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::RegionSequence;
use crate::error::{Error, Result};

pub use cache::{CacheKey, ScoreCache};
pub use reference::TrigramBackend;
pub use remote::{RemoteBackend, RemoteModel};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub model_id: String,
    /// Conditioning text, used verbatim. Empty means "no prefix".
    pub prefix: String,
    pub continuation: String,
}

impl ScoreRequest {
    pub fn new(
        model_id: impl Into<String>,
        prefix: impl Into<String>,
        continuation: impl Into<String>,
    ) -> Self {
        ScoreRequest {
            model_id: model_id.into(),
            prefix: prefix.into(),
            continuation: continuation.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
    /// `(start, end)` character spans into the continuation.
    pub offsets: Vec<(usize, usize)>,
}

impl ScoredSequence {
    /// Checks the shape and offset invariants against the scored text.
    pub fn validate(&self, continuation: &str) -> Result<()> {
        let n = self.tokens.len();
        if self.logprobs.len() != n || self.offsets.len() != n {
            return Err(Error::Tokenization(format!(
                "{} tokens, {} logprobs, {} offsets",
                n,
                self.logprobs.len(),
                self.offsets.len()
            )));
        }
        let chars: Vec<char> = continuation.chars().collect();
        let mut covered = vec![false; chars.len()];
        let mut prev_end = 0usize;
        for (i, &(start, end)) in self.offsets.iter().enumerate() {
            if start > end || end > chars.len() {
                return Err(Error::Tokenization(format!(
                    "token {i} has span ({start}, {end}) outside a {}-character continuation",
                    chars.len()
                )));
            }
            if start < prev_end {
                return Err(Error::Tokenization(format!(
                    "token {i} overlaps or precedes the previous token"
                )));
            }
            covered[start..end].iter_mut().for_each(|c| *c = true);
            prev_end = end;
        }
        if let Some(pos) = chars
            .iter()
            .zip(&covered)
            .position(|(c, covered)| !c.is_whitespace() && !covered)
        {
            return Err(Error::Tokenization(format!(
                "character {pos} ({:?}) is not covered by any token",
                chars[pos]
            )));
        }
        Ok(())
    }
}

/// What a backend says about itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    /// Identity folded into cache keys; changes whenever scores could change.
    pub backend_id: String,
    /// Maximum number of tokens (prefix plus continuation) per request.
    pub context_limit: usize,
    /// How many requests may be in flight at once.
    pub max_concurrency: usize,
    /// Whether a beginning-of-sequence token is prepended to unprefixed input.
    pub bos_prepended: bool,
}

pub trait ScoringBackend: Send + Sync {
    fn info(&self) -> BackendInfo;

    /// Per-token log p(token | prefix, earlier tokens) for the continuation.
    fn score(&self, req: &ScoreRequest) -> Result<ScoredSequence>;

    fn score_batch(&self, reqs: &[ScoreRequest]) -> Result<Vec<ScoredSequence>> {
        reqs.iter().map(|r| self.score(r)).collect()
    }

    /// Length of `text` in this backend's tokens.
    fn count_tokens(&self, text: &str) -> Result<usize>;
}

/// Scores one request, consulting and populating `cache` when given.
pub fn score_continuation(
    req: &ScoreRequest,
    backend: &dyn ScoringBackend,
    cache: Option<&ScoreCache>,
) -> Result<ScoredSequence> {
    if req.continuation.trim().is_empty() {
        return Err(Error::InvalidInput("continuation must be non-empty".into()));
    }
    let key = cache.map(|_| {
        CacheKey::new(
            &req.model_id,
            &backend.info().backend_id,
            &req.prefix,
            &req.continuation,
        )
    });
    if let (Some(cache), Some(key)) = (cache, &key) {
        if let Some(hit) = cache.get(key) {
            return Ok(hit);
        }
    }
    let scored = backend.score(req)?;
    scored.validate(&req.continuation)?;
    if let (Some(cache), Some(key)) = (cache, &key) {
        cache.put(key, &scored)?;
    }
    Ok(scored)
}

/// Total log-likelihood of the scored continuation.
pub fn sequence_loglik(s: &ScoredSequence) -> f64 {
    s.logprobs.iter().sum()
}

/// Surprisal per region: each token belongs to the region containing its
/// first character, and a region's surprisal is minus the sum of its
/// tokens' log-probabilities. Regions without tokens map to 0.
pub fn region_surprisals(
    s: &ScoredSequence,
    regions: &RegionSequence,
    continuation: &str,
) -> Result<BTreeMap<u32, f64>> {
    if regions.text() != continuation {
        return Err(Error::InvalidInput(format!(
            "regions join to {:?}, continuation is {continuation:?}",
            regions.text()
        )));
    }
    let spans = regions.char_spans();
    let mut sums: BTreeMap<u32, f64> = spans.iter().map(|&(k, _, _)| (k, 0.0)).collect();
    for (i, &(start, _)) in s.offsets.iter().enumerate() {
        let region = spans
            .iter()
            .find(|&&(_, lo, hi)| lo <= start && start < hi)
            .map(|&(k, _, _)| k)
            .ok_or_else(|| Error::Tokenization(format!("token {i} starts outside every region")))?;
        *sums.get_mut(&region).expect("region present") += s.logprobs[i];
    }
    Ok(sums.into_iter().map(|(k, sum)| (k, 0.0 - sum)).collect())
}
