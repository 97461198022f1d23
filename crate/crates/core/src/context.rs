//! Prefix construction and trial planning.
//!
//! For every target the harness draws a seeded permutation of the eligible
//! pool and appends sentences until the prefix reaches a token checkpoint.
//! Because every checkpoint reads from the same permutation, the prefix at a
//! longer checkpoint always extends the prefix at a shorter one.
//!
//! Sentences are joined with single spaces; a period is appended to any
//! sentence lacking sentence-final punctuation.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{CorpusSource, PairSuite, RegionSuite, SentenceId};
use crate::error::{Error, Result};
use crate::scorer::ScoringBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    InDomain,
    OutOfDomain,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Acceptable,
    Unacceptable,
    NotApplicable,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::InDomain => "in_domain",
            Domain::OutOfDomain => "out_of_domain",
            Domain::Control => "control",
        }
    }
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Acceptable => "acceptable",
            Polarity::Unacceptable => "unacceptable",
            Polarity::NotApplicable => "not_applicable",
        }
    }
}

/// Where prefix sentences come from and which member of their pair is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PrefixStrategy {
    domain: Domain,
    polarity: Polarity,
}

impl PrefixStrategy {
    pub const CONTROL: PrefixStrategy = PrefixStrategy {
        domain: Domain::Control,
        polarity: Polarity::NotApplicable,
    };

    /// Control sentences carry no polarity; every other domain needs one.
    pub fn new(domain: Domain, polarity: Polarity) -> Result<Self> {
        let ok = match domain {
            Domain::Control => polarity == Polarity::NotApplicable,
            _ => polarity != Polarity::NotApplicable,
        };
        if !ok {
            return Err(Error::InvalidInput(format!(
                "polarity {} is not valid for {} prefixes",
                polarity.as_str(),
                domain.as_str()
            )));
        }
        Ok(PrefixStrategy { domain, polarity })
    }

    pub fn in_domain(polarity: Polarity) -> Self {
        Self::new(Domain::InDomain, polarity).expect("valid in-domain polarity")
    }

    pub fn out_of_domain(polarity: Polarity) -> Self {
        Self::new(Domain::OutOfDomain, polarity).expect("valid out-of-domain polarity")
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }
}

impl fmt::Display for PrefixStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.domain {
            Domain::Control => f.write_str("control"),
            d => write!(f, "{}:{}", d.as_str(), self.polarity.as_str()),
        }
    }
}

impl FromStr for PrefixStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (domain, polarity) = match s.split_once(':') {
            Some((d, p)) => (d.trim(), Some(p.trim())),
            None => (s, None),
        };
        let domain = match domain {
            "in_domain" => Domain::InDomain,
            "out_of_domain" => Domain::OutOfDomain,
            "control" => Domain::Control,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown prefix domain {other:?}"
                )))
            }
        };
        let polarity = match polarity {
            None if domain == Domain::Control => Polarity::NotApplicable,
            None => {
                return Err(Error::InvalidInput(format!(
                    "strategy {s:?} needs a polarity"
                )))
            }
            Some("acceptable") => Polarity::Acceptable,
            Some("unacceptable") => Polarity::Unacceptable,
            Some("not_applicable") => Polarity::NotApplicable,
            Some(other) => return Err(Error::InvalidInput(format!("unknown polarity {other:?}"))),
        };
        PrefixStrategy::new(domain, polarity)
    }
}

/// Nominal prefix lengths, in tokens, at which trials are built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthGrid {
    checkpoints: Vec<usize>,
    budget_cap: usize,
}

impl LengthGrid {
    pub fn new(mut checkpoints: Vec<usize>, budget_cap: usize) -> Result<Self> {
        checkpoints.sort_unstable();
        checkpoints.dedup();
        if checkpoints.first() != Some(&0) {
            return Err(Error::InvalidInput("length grid must include 0".into()));
        }
        if let Some(&max) = checkpoints.last() {
            if max > budget_cap {
                return Err(Error::InvalidInput(format!(
                    "checkpoint {max} exceeds the token budget of {budget_cap}"
                )));
            }
        }
        Ok(LengthGrid {
            checkpoints,
            budget_cap,
        })
    }

    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    pub fn budget_cap(&self) -> usize {
        self.budget_cap
    }
}

impl Default for LengthGrid {
    fn default() -> Self {
        LengthGrid::new(vec![0, 50, 100, 200, 400, 700, 1000], 1000).expect("default grid is valid")
    }
}

/// Which suites count as "the same domain" when drawing out-of-domain prefixes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcludeScope {
    #[default]
    Suite,
    Phenomenon,
}

impl FromStr for ExcludeScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "suite" => Ok(ExcludeScope::Suite),
            "phenomenon" => Ok(ExcludeScope::Phenomenon),
            other => Err(Error::InvalidInput(format!(
                "unknown exclude scope {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prefix {
    pub text: String,
    pub sentence_ids: Vec<SentenceId>,
    /// Measured length of `text` under the active tokenizer.
    pub token_length: usize,
    /// The nominal checkpoint this prefix was built for.
    pub checkpoint: usize,
    /// The pool ran out before the checkpoint was reached.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub underfilled: bool,
}

impl Prefix {
    pub fn empty() -> Self {
        Prefix {
            text: String::new(),
            sentence_ids: Vec::new(),
            token_length: 0,
            checkpoint: 0,
            underfilled: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.sentence_ids.is_empty()
    }

    /// The text sent to a backend ahead of the target sentence: the prefix
    /// followed by one space, or nothing for an empty prefix.
    pub fn conditioning_text(&self) -> String {
        if self.text.is_empty() {
            String::new()
        } else {
            format!("{} ", self.text)
        }
    }
}

/// Length of a text in some tokenizer's units.
pub trait TokenCounter {
    fn count_tokens(&self, text: &str) -> Result<usize>;
}

impl<T: ScoringBackend + ?Sized> TokenCounter for T {
    fn count_tokens(&self, text: &str) -> Result<usize> {
        ScoringBackend::count_tokens(self, text)
    }
}

/// Counts whitespace-separated words. Useful when no backend is at hand.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordCounter;

impl TokenCounter for WordCounter {
    fn count_tokens(&self, text: &str) -> Result<usize> {
        Ok(text.split_whitespace().count())
    }
}

/// A sentence that may be drawn into a prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSentence {
    pub id: SentenceId,
    pub text: String,
}

impl PoolSentence {
    pub fn new(id: SentenceId, text: impl Into<String>) -> Self {
        PoolSentence {
            id,
            text: text.into(),
        }
    }
}

/// Appends a period unless the sentence already ends in `.`, `!` or `?`.
pub fn terminate_sentence(s: &str) -> String {
    let s = s.trim();
    if s.ends_with(['.', '!', '?']) {
        s.to_string()
    } else {
        format!("{s}.")
    }
}

/// Derives a per-stream seed from the global seed and a stream label, so
/// trial sets do not depend on the order targets are processed in.
pub fn derive_seed(global: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn shuffled<'a>(
    pool: &'a [PoolSentence],
    excluded: &HashSet<SentenceId>,
    seed: u64,
) -> Vec<&'a PoolSentence> {
    let mut eligible: Vec<&PoolSentence> =
        pool.iter().filter(|s| !excluded.contains(&s.id)).collect();
    // Canonical order first, so the draw does not depend on how the pool was assembled.
    eligible.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    eligible
}

/// Grows a prefix one sentence at a time from a fixed order.
struct PrefixGrower<'a> {
    order: Vec<&'a PoolSentence>,
    taken: usize,
    text: String,
    ids: Vec<SentenceId>,
    tokens: usize,
}

impl<'a> PrefixGrower<'a> {
    fn new(order: Vec<&'a PoolSentence>) -> Self {
        PrefixGrower {
            order,
            taken: 0,
            text: String::new(),
            ids: Vec::new(),
            tokens: 0,
        }
    }

    fn push_next(&mut self, counter: &dyn TokenCounter) -> Result<bool> {
        let Some(next) = self.order.get(self.taken) else {
            return Ok(false);
        };
        if !self.text.is_empty() {
            self.text.push(' ');
        }
        self.text.push_str(&terminate_sentence(&next.text));
        self.ids.push(next.id.clone());
        self.taken += 1;
        self.tokens = counter.count_tokens(&self.text)?;
        Ok(true)
    }

    /// Extends until the measured length reaches `checkpoint`.
    fn grow_to(&mut self, checkpoint: usize, counter: &dyn TokenCounter) -> Result<Prefix> {
        let mut underfilled = false;
        while self.tokens < checkpoint {
            if !self.push_next(counter)? {
                underfilled = true;
                break;
            }
        }
        Ok(self.snapshot(checkpoint, underfilled))
    }

    fn snapshot(&self, checkpoint: usize, underfilled: bool) -> Prefix {
        Prefix {
            text: self.text.clone(),
            sentence_ids: self.ids.clone(),
            token_length: self.tokens,
            checkpoint,
            underfilled,
        }
    }
}

/// Samples sentences without replacement until the prefix reaches
/// `checkpoint` tokens; the sentence that crosses the checkpoint is kept.
pub fn sample_prefix(
    pool: &[PoolSentence],
    excluded: &HashSet<SentenceId>,
    checkpoint: usize,
    seed: u64,
    counter: &dyn TokenCounter,
) -> Result<Prefix> {
    if checkpoint == 0 {
        return Err(Error::InvalidInput("checkpoint must be at least 1".into()));
    }
    let order = shuffled(pool, excluded, seed);
    if order.is_empty() {
        return Err(Error::InvalidInput("no eligible prefix sentences".into()));
    }
    PrefixGrower::new(order).grow_to(checkpoint, counter)
}

/// What a trial scores: a minimal pair or a multi-condition item.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetRef {
    Pair { suite_id: String, pair_id: String },
    Item { suite_id: String, item_id: u32 },
}

impl TargetRef {
    pub fn suite_id(&self) -> &str {
        match self {
            TargetRef::Pair { suite_id, .. } | TargetRef::Item { suite_id, .. } => suite_id,
        }
    }

    pub fn key(&self) -> String {
        match self {
            TargetRef::Pair { suite_id, pair_id } => format!("{suite_id}:{pair_id}"),
            TargetRef::Item { suite_id, item_id } => format!("{suite_id}:{item_id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub id: String,
    pub target: TargetRef,
    /// `None` for the unprefixed baseline.
    pub strategy: Option<PrefixStrategy>,
    /// Set for single-source trials built from one named suite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_suite: Option<String>,
    pub prefix: Prefix,
    pub seed: u64,
}

impl TrialSpec {
    pub fn baseline(target: TargetRef, seed: u64) -> Self {
        TrialSpec {
            id: format!("{}:baseline:0", target.key()),
            target,
            strategy: None,
            source_suite: None,
            prefix: Prefix::empty(),
            seed,
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.strategy.is_none()
    }
}

/// One target with the ids of its own sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolTarget {
    pub target: TargetRef,
    pub own_sentences: Vec<SentenceId>,
}

/// A suite seen as a source of targets and of prefix sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuitePool {
    pub suite_id: String,
    pub phenomenon: String,
    pub targets: Vec<PoolTarget>,
    pub acceptable: Vec<PoolSentence>,
    pub unacceptable: Vec<PoolSentence>,
}

impl SuitePool {
    pub fn from_pairs(suite: &PairSuite) -> Self {
        let mut out = SuitePool {
            suite_id: suite.suite_id.clone(),
            phenomenon: suite.phenomenon.clone(),
            targets: Vec::with_capacity(suite.pairs.len()),
            acceptable: Vec::with_capacity(suite.pairs.len()),
            unacceptable: Vec::with_capacity(suite.pairs.len()),
        };
        for p in &suite.pairs {
            let good = p.sentence_id(true);
            let bad = p.sentence_id(false);
            out.acceptable
                .push(PoolSentence::new(good.clone(), &p.acceptable));
            out.unacceptable
                .push(PoolSentence::new(bad.clone(), &p.unacceptable));
            out.targets.push(PoolTarget {
                target: TargetRef::Pair {
                    suite_id: p.suite_id.clone(),
                    pair_id: p.id.clone(),
                },
                own_sentences: vec![good, bad],
            });
        }
        out
    }

    /// Grammatical conditions feed the acceptable pool, the rest the
    /// unacceptable pool.
    pub fn from_regions(suite: &RegionSuite) -> Self {
        let mut out = SuitePool {
            suite_id: suite.suite_id.clone(),
            phenomenon: suite.phenomenon.clone(),
            targets: Vec::with_capacity(suite.items.len()),
            acceptable: Vec::new(),
            unacceptable: Vec::new(),
        };
        for item in &suite.items {
            let mut own = Vec::new();
            for (name, cond) in &item.conditions {
                let id = item.sentence_id(&suite.suite_id, name);
                let s = PoolSentence::new(id.clone(), cond.regions.text());
                if cond.grammatical {
                    out.acceptable.push(s);
                } else {
                    out.unacceptable.push(s);
                }
                own.push(id);
            }
            out.targets.push(PoolTarget {
                target: TargetRef::Item {
                    suite_id: suite.suite_id.clone(),
                    item_id: item.item_id,
                },
                own_sentences: own,
            });
        }
        out
    }

    pub fn sentences(&self, polarity: Polarity) -> &[PoolSentence] {
        match polarity {
            Polarity::Unacceptable => &self.unacceptable,
            _ => &self.acceptable,
        }
    }
}

/// Shared settings for building trials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialPlan {
    pub strategies: Vec<PrefixStrategy>,
    pub grid: LengthGrid,
    pub seed: u64,
    pub exclude_scope: ExcludeScope,
}

fn corpus_pool(corpus: &CorpusSource) -> Vec<PoolSentence> {
    corpus
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| PoolSentence::new(corpus.sentence_id(i), s))
        .collect()
}

/// Builds one baseline trial per target plus one trial per
/// (target, strategy, non-zero checkpoint).
///
/// `all_suites` are the suites out-of-domain prefixes may draw from; the
/// target suite itself (and, under [`ExcludeScope::Phenomenon`], every suite
/// sharing its phenomenon) is skipped.
pub fn build_trials(
    target: &SuitePool,
    all_suites: &[SuitePool],
    corpus: Option<&CorpusSource>,
    plan: &TrialPlan,
    counter: &dyn TokenCounter,
) -> Result<Vec<TrialSpec>> {
    if plan.strategies.is_empty() {
        return Err(Error::InvalidInput(
            "at least one prefix strategy is required".into(),
        ));
    }
    let control = corpus.map(corpus_pool);
    let mut out_of_domain: [Vec<PoolSentence>; 2] = [Vec::new(), Vec::new()];
    for suite in all_suites {
        let same = match plan.exclude_scope {
            ExcludeScope::Suite => suite.suite_id == target.suite_id,
            ExcludeScope::Phenomenon => {
                suite.suite_id == target.suite_id || suite.phenomenon == target.phenomenon
            }
        };
        if !same {
            out_of_domain[0].extend_from_slice(&suite.acceptable);
            out_of_domain[1].extend_from_slice(&suite.unacceptable);
        }
    }

    let checkpoints: Vec<usize> = plan
        .grid
        .checkpoints()
        .iter()
        .copied()
        .filter(|&c| c > 0)
        .collect();
    let mut trials =
        Vec::with_capacity(target.targets.len() * (1 + plan.strategies.len() * checkpoints.len()));
    let no_exclusions = HashSet::new();

    for t in &target.targets {
        let key = t.target.key();
        trials.push(TrialSpec::baseline(
            t.target.clone(),
            derive_seed(plan.seed, &[&key, "baseline"]),
        ));
        let own: HashSet<SentenceId> = t.own_sentences.iter().cloned().collect();

        for &strategy in &plan.strategies {
            let label = strategy.to_string();
            let seed = derive_seed(plan.seed, &[&key, &label]);
            let (pool, excluded): (&[PoolSentence], &HashSet<SentenceId>) = match strategy.domain()
            {
                Domain::InDomain => (target.sentences(strategy.polarity()), &own),
                Domain::OutOfDomain => {
                    let idx = usize::from(strategy.polarity() == Polarity::Unacceptable);
                    (&out_of_domain[idx], &no_exclusions)
                }
                Domain::Control => match &control {
                    Some(c) => (c, &no_exclusions),
                    None => {
                        return Err(Error::InvalidInput("control prefixes need a corpus".into()))
                    }
                },
            };
            let order = shuffled(pool, excluded, seed);
            if order.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "no eligible {label} prefix sentences for target {key}"
                )));
            }
            let mut grower = PrefixGrower::new(order);
            for &checkpoint in &checkpoints {
                let prefix = grower.grow_to(checkpoint, counter)?;
                trials.push(TrialSpec {
                    id: format!("{key}:{label}:{checkpoint}"),
                    target: t.target.clone(),
                    strategy: Some(strategy),
                    source_suite: None,
                    prefix,
                    seed,
                });
            }
        }
    }
    Ok(trials)
}

/// Prefixes every target with exactly `count` sentences drawn from one
/// other suite. The stopping rule is the sentence count, not a token budget.
/// The prefix's `checkpoint` records its measured token length.
pub fn build_single_phenomenon_trials(
    target: &SuitePool,
    source: &SuitePool,
    polarity: Polarity,
    count: usize,
    seed: u64,
    counter: &dyn TokenCounter,
) -> Result<Vec<TrialSpec>> {
    if source.suite_id == target.suite_id {
        return Err(Error::InvalidInput(
            "source and target suites must differ".into(),
        ));
    }
    if count == 0 {
        return Err(Error::InvalidInput(
            "sentence count must be at least 1".into(),
        ));
    }
    let pool = source.sentences(polarity);
    if pool.len() < count {
        return Err(Error::InvalidInput(format!(
            "suite {} has {} {} sentences, {count} requested",
            source.suite_id,
            pool.len(),
            polarity.as_str()
        )));
    }
    let strategy = PrefixStrategy::new(Domain::OutOfDomain, polarity)?;
    let no_exclusions = HashSet::new();
    let mut trials = Vec::with_capacity(target.targets.len());
    for t in &target.targets {
        let key = t.target.key();
        let trial_seed = derive_seed(seed, &[&key, "single", &source.suite_id, polarity.as_str()]);
        let mut grower = PrefixGrower::new(shuffled(pool, &no_exclusions, trial_seed));
        for _ in 0..count {
            grower.push_next(counter)?;
        }
        let mut prefix = grower.snapshot(0, false);
        prefix.checkpoint = prefix.token_length;
        trials.push(TrialSpec {
            id: format!(
                "{key}:from:{}:{}:{count}",
                source.suite_id,
                polarity.as_str()
            ),
            target: t.target.clone(),
            strategy: Some(strategy),
            source_suite: Some(source.suite_id.clone()),
            prefix,
            seed: trial_seed,
        });
    }
    Ok(trials)
}

/// Baseline trials for every target in a suite.
pub fn baseline_trials(target: &SuitePool, seed: u64) -> Vec<TrialSpec> {
    target
        .targets
        .iter()
        .map(|t| {
            TrialSpec::baseline(
                t.target.clone(),
                derive_seed(seed, &[&t.target.key(), "baseline"]),
            )
        })
        .collect()
}
