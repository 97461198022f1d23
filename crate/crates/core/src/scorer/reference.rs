//! Deterministic offline backend: an add-alpha smoothed character trigram.
//!
//! The corpus sentences are joined with single spaces into one stream and
//! padded on the left with two beginning-of-stream markers. The marker only
//! ever appears as context, so the predicted alphabet is the set of corpus
//! characters plus one unknown symbol:
//!
//! ```text
//! p(c | a b) = (count(a b c) + alpha) / (count(a b .) + alpha * |V|)
//! ```

use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};

use super::{BackendInfo, ScoreRequest, ScoredSequence, ScoringBackend};
use crate::dataset::CorpusSource;
use crate::error::{Error, Result};

const BOS: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct TrigramBackend {
    alphabet: HashMap<char, u32>,
    unk: u32,
    alpha: f64,
    trigrams: HashMap<(u32, u32, u32), u64>,
    contexts: HashMap<(u32, u32), u64>,
    context_limit: usize,
    backend_id: String,
}

impl TrigramBackend {
    pub const DEFAULT_CONTEXT_LIMIT: usize = 4096;

    pub fn new(corpus: &CorpusSource, alpha: f64) -> Result<Self> {
        Self::from_sentences(&corpus.sentences, alpha)
    }

    pub fn from_sentences(sentences: &[String], alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        let stream = sentences.join(" ");
        if stream.is_empty() {
            return Err(Error::InvalidInput(
                "reference backend needs a non-empty corpus".into(),
            ));
        }
        let chars: BTreeSet<char> = stream.chars().collect();
        let alphabet: HashMap<char, u32> = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32))
            .collect();
        let unk = alphabet.len() as u32;

        let mut trigrams = HashMap::new();
        let mut contexts = HashMap::new();
        let (mut a, mut b) = (BOS, BOS);
        for c in stream.chars() {
            let c = alphabet[&c];
            *trigrams.entry((a, b, c)).or_insert(0) += 1;
            *contexts.entry((a, b)).or_insert(0) += 1;
            (a, b) = (b, c);
        }

        let mut hasher = Sha256::new();
        for s in sentences {
            hasher.update((s.len() as u64).to_le_bytes());
            hasher.update(s.as_bytes());
        }
        let digest = hex::encode(hasher.finalize());
        let backend_id = format!("reference-trigram:alpha={alpha:?}:corpus={}", &digest[..16]);

        Ok(TrigramBackend {
            alphabet,
            unk,
            alpha,
            trigrams,
            contexts,
            context_limit: Self::DEFAULT_CONTEXT_LIMIT,
            backend_id,
        })
    }

    pub fn with_context_limit(mut self, limit: usize) -> Self {
        self.context_limit = limit;
        self
    }

    /// Number of predictable symbols, including the unknown symbol.
    pub fn vocab_size(&self) -> usize {
        self.alphabet.len() + 1
    }

    fn symbol(&self, c: char) -> u32 {
        self.alphabet.get(&c).copied().unwrap_or(self.unk)
    }

    /// Smoothed probability of `c` after the two-character history `(a, b)`.
    /// `None` stands for the beginning-of-stream marker.
    pub fn prob(&self, a: Option<char>, b: Option<char>, c: char) -> f64 {
        let a = a.map_or(BOS, |c| self.symbol(c));
        let b = b.map_or(BOS, |c| self.symbol(c));
        self.prob_ids(a, b, self.symbol(c))
    }

    fn prob_ids(&self, a: u32, b: u32, c: u32) -> f64 {
        let tri = self.trigrams.get(&(a, b, c)).copied().unwrap_or(0) as f64;
        let ctx = self.contexts.get(&(a, b)).copied().unwrap_or(0) as f64;
        (tri + self.alpha) / (ctx + self.alpha * self.vocab_size() as f64)
    }
}

impl ScoringBackend for TrigramBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            backend_id: self.backend_id.clone(),
            context_limit: self.context_limit,
            max_concurrency: usize::MAX,
            bos_prepended: true,
        }
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoredSequence> {
        let needed = req.prefix.chars().count() + req.continuation.chars().count();
        if needed > self.context_limit {
            return Err(Error::ContextOverflow {
                needed,
                limit: self.context_limit,
            });
        }
        let (mut a, mut b) = (BOS, BOS);
        for c in req.prefix.chars() {
            (a, b) = (b, self.symbol(c));
        }
        let n = req.continuation.chars().count();
        let mut out = ScoredSequence {
            tokens: Vec::with_capacity(n),
            logprobs: Vec::with_capacity(n),
            offsets: Vec::with_capacity(n),
        };
        for (i, ch) in req.continuation.chars().enumerate() {
            let c = self.symbol(ch);
            out.tokens.push(ch.to_string());
            out.logprobs.push(self.prob_ids(a, b, c).ln());
            out.offsets.push((i, i + 1));
            (a, b) = (b, c);
        }
        Ok(out)
    }

    fn count_tokens(&self, text: &str) -> Result<usize> {
        Ok(text.chars().count())
    }
}
