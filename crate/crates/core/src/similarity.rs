//! Lexical and dependency-label overlap between prefixes and targets.
//!
//! Overlap is an F1 score over token bags. By default bags are multisets,
//! so a repeated "the" counts twice; [`OverlapMode::Set`] collapses
//! duplicates for sensitivity checks. Dependency labels come from a sidecar
//! file produced by an external parser, one sentence per line:
//!
//! ```text
//! suite:0:good<TAB>det nsubj root punct
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::context::derive_seed;
use crate::dataset::{Dataset, SentenceId};
use crate::error::{Error, Result};
use crate::scorer::ScoringBackend;
use crate::stats::{point_biserial, Correlation};

/// A multiset of non-empty token strings.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenBag {
    counts: BTreeMap<String, usize>,
    len: usize,
}

impl TokenBag {
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut bag = TokenBag::default();
        for t in tokens {
            let t = t.into();
            if t.is_empty() {
                return Err(Error::InvalidInput(
                    "token bags cannot hold empty tokens".into(),
                ));
            }
            *bag.counts.entry(t).or_insert(0) += 1;
            bag.len += 1;
        }
        Ok(bag)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, token: &str) -> usize {
        self.counts.get(token).copied().unwrap_or(0)
    }

    fn size(&self, mode: OverlapMode) -> usize {
        match mode {
            OverlapMode::Multiset => self.len,
            OverlapMode::Set => self.distinct(),
        }
    }

    fn overlap(&self, other: &TokenBag, mode: OverlapMode) -> usize {
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .counts
            .iter()
            .map(|(t, &c)| {
                let d = large.count(t);
                match mode {
                    OverlapMode::Multiset => c.min(d),
                    OverlapMode::Set => usize::from(d > 0),
                }
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    #[default]
    Multiset,
    Set,
}

impl FromStr for OverlapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiset" => Ok(OverlapMode::Multiset),
            "set" => Ok(OverlapMode::Set),
            _ => Err(Error::Config(format!(
                "unknown overlap mode {s:?} (expected multiset or set)"
            ))),
        }
    }
}

/// Multiset F1 between two bags.
pub fn bag_f1(a: &TokenBag, b: &TokenBag) -> Result<f64> {
    bag_f1_with(a, b, OverlapMode::Multiset)
}

pub fn bag_f1_with(a: &TokenBag, b: &TokenBag, mode: OverlapMode) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput(
            "F1 is undefined for an empty bag".into(),
        ));
    }
    let overlap = a.overlap(b, mode);
    if overlap == 0 {
        return Ok(0.0);
    }
    // Harmonic mean of overlap/|a| and overlap/|b|.
    Ok(2.0 * overlap as f64 / (a.size(mode) + b.size(mode)) as f64)
}

pub trait Tokenizer: Sync {
    fn tokenize(&self, text: &str) -> Result<Vec<String>>;
}

/// Lowercases, splits on whitespace and emits each punctuation character as
/// its own token. Apostrophes inside words are kept ("don't").
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultTokenizer;

impl Tokenizer for DefaultTokenizer {
    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            let mut cur = String::new();
            let chars: Vec<char> = word.chars().collect();
            for (i, &c) in chars.iter().enumerate() {
                let inner_apostrophe = c == '\''
                    && i > 0
                    && i + 1 < chars.len()
                    && chars[i - 1].is_alphanumeric()
                    && chars[i + 1].is_alphanumeric();
                if c.is_alphanumeric() || inner_apostrophe {
                    cur.extend(c.to_lowercase());
                } else {
                    if !cur.is_empty() {
                        out.push(std::mem::take(&mut cur));
                    }
                    out.push(c.to_string());
                }
            }
            if !cur.is_empty() {
                out.push(cur);
            }
        }
        Ok(out)
    }
}

/// Tokenizes with the scoring backend's own tokenizer.
pub struct BackendTokenizer<'a> {
    pub backend: &'a dyn ScoringBackend,
    pub model_id: String,
}

impl Tokenizer for BackendTokenizer<'_> {
    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        let req = crate::scorer::ScoreRequest::new(self.model_id.clone(), "", text);
        let scored = self.backend.score(&req)?;
        Ok(scored
            .tokens
            .into_iter()
            .filter(|t| !t.is_empty())
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    #[default]
    Token,
    Dependency,
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(SimilarityKind::Token),
            "dependency" => Ok(SimilarityKind::Dependency),
            _ => Err(Error::Config(format!(
                "unknown similarity kind {s:?} (expected token or dependency)"
            ))),
        }
    }
}

impl SimilarityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityKind::Token => "token",
            SimilarityKind::Dependency => "dependency",
        }
    }
}

/// Dependency labels per sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationTable {
    labels: HashMap<SentenceId, Vec<String>>,
}

impl AnnotationTable {
    pub fn get(&self, id: &SentenceId) -> Option<&[String]> {
        self.labels.get(id).map(Vec::as_slice)
    }

    pub fn insert(&mut self, id: SentenceId, labels: Vec<String>) {
        self.labels.insert(id, labels);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Every annotated id must name a sentence in `dataset`.
    pub fn validate_against(&self, dataset: &Dataset) -> Result<()> {
        let known: std::collections::HashSet<SentenceId> = dataset_sentences(dataset)
            .into_iter()
            .map(|s| s.id)
            .collect();
        let mut unknown: Vec<&str> = self
            .labels
            .keys()
            .filter(|id| !known.contains(*id))
            .map(SentenceId::as_str)
            .collect();
        unknown.sort_unstable();
        match unknown.first() {
            None => Ok(()),
            Some(first) => Err(Error::InvalidInput(format!(
                "{} annotated sentence ids are not in the dataset, first {first:?}",
                unknown.len()
            ))),
        }
    }
}

pub fn parse_annotations(text: &str, path: &Path) -> Result<AnnotationTable> {
    let mut table = AnnotationTable::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = |message: String| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (id, labels) = line
            .split_once('\t')
            .ok_or_else(|| record("expected `sentence-id<TAB>labels`".into()))?;
        let id = SentenceId(id.trim().to_string());
        let labels: Vec<String> = labels.split_whitespace().map(str::to_string).collect();
        if labels.is_empty() {
            return Err(record(format!("no labels for {id}")));
        }
        if table.labels.insert(id.clone(), labels).is_some() {
            return Err(record(format!("duplicate sentence id {id}")));
        }
    }
    Ok(table)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimSentence {
    pub id: SentenceId,
    pub text: String,
}

impl SimSentence {
    pub fn new(id: SentenceId, text: impl Into<String>) -> Self {
        SimSentence {
            id,
            text: text.into(),
        }
    }
}

/// How to turn sentences into bags and compare them.
pub struct Measure<'a> {
    pub kind: SimilarityKind,
    pub mode: OverlapMode,
    pub tokenizer: &'a dyn Tokenizer,
    pub annotations: Option<&'a AnnotationTable>,
}

impl<'a> Measure<'a> {
    pub fn token(tokenizer: &'a dyn Tokenizer) -> Self {
        Measure {
            kind: SimilarityKind::Token,
            mode: OverlapMode::Multiset,
            tokenizer,
            annotations: None,
        }
    }

    pub fn dependency(annotations: Option<&'a AnnotationTable>) -> Self {
        Measure {
            kind: SimilarityKind::Dependency,
            mode: OverlapMode::Multiset,
            tokenizer: &DefaultTokenizer,
            annotations,
        }
    }

    pub fn with_mode(mut self, mode: OverlapMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn bag(&self, s: &SimSentence) -> Result<TokenBag> {
        match self.kind {
            SimilarityKind::Token => TokenBag::new(self.tokenizer.tokenize(&s.text)?),
            SimilarityKind::Dependency => {
                let table = self.annotations.ok_or_else(|| {
                    Error::InvalidInput("dependency similarity needs an annotation table".into())
                })?;
                let labels = table.get(&s.id).ok_or_else(|| {
                    Error::InvalidInput(format!("missing dependency annotation for {}", s.id))
                })?;
                TokenBag::new(labels.iter().cloned())
            }
        }
    }

    pub fn f1(&self, a: &TokenBag, b: &TokenBag) -> Result<f64> {
        bag_f1_with(a, b, self.mode)
    }
}

/// Mean F1 between the target and each prefix sentence.
pub fn mean_prefix_similarity(
    prefix: &[SimSentence],
    target: &SimSentence,
    measure: &Measure,
) -> Result<f64> {
    if prefix.is_empty() {
        return Err(Error::InvalidInput(
            "mean similarity needs at least one prefix sentence".into(),
        ));
    }
    let t = measure.bag(target)?;
    let mut total = 0.0;
    for s in prefix {
        total += measure.f1(&measure.bag(s)?, &t)?;
    }
    Ok(total / prefix.len() as f64)
}

/// Acceptable sentences of every pair suite and grammatical conditions of
/// every region suite, in dataset order.
pub fn dataset_sentences(dataset: &Dataset) -> Vec<SimSentence> {
    let mut out = Vec::new();
    for suite in &dataset.pair_suites {
        for p in &suite.pairs {
            out.push(SimSentence::new(p.sentence_id(true), p.acceptable.clone()));
            out.push(SimSentence::new(
                p.sentence_id(false),
                p.unacceptable.clone(),
            ));
        }
    }
    for suite in &dataset.region_suites {
        for item in &suite.items {
            for (name, c) in &item.conditions {
                out.push(SimSentence::new(
                    item.sentence_id(&suite.suite_id, name),
                    c.regions.text(),
                ));
            }
        }
    }
    out
}

/// Acceptable sentences grouped by phenomenon.
pub fn phenomenon_sentences(dataset: &Dataset) -> BTreeMap<String, Vec<SimSentence>> {
    let mut out: BTreeMap<String, Vec<SimSentence>> = BTreeMap::new();
    for suite in &dataset.pair_suites {
        let v = out.entry(suite.phenomenon.clone()).or_default();
        for p in &suite.pairs {
            v.push(SimSentence::new(p.sentence_id(true), p.acceptable.clone()));
        }
    }
    for suite in &dataset.region_suites {
        let v = out.entry(suite.phenomenon.clone()).or_default();
        for item in &suite.items {
            for (name, c) in item.conditions.iter().filter(|(_, c)| c.grammatical) {
                v.push(SimSentence::new(
                    item.sentence_id(&suite.suite_id, name),
                    c.regions.text(),
                ));
            }
        }
    }
    out.retain(|_, v| !v.is_empty());
    out
}

/// Mean overlap between sampled test (row) and prefix (column) sentences
/// for every ordered phenomenon pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub kind: SimilarityKind,
    /// Alphabetical.
    pub phenomena: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Sentence pairs actually averaged in each cell.
    pub counts: Vec<Vec<usize>>,
    pub sample_size: usize,
}

impl SimilarityMatrix {
    pub fn get(&self, test: &str, prefix: &str) -> Option<f64> {
        let i = self.phenomena.iter().position(|p| p == test)?;
        let j = self.phenomena.iter().position(|p| p == prefix)?;
        Some(self.values[i][j])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("phenomenon");
        for p in &self.phenomena {
            s.push(',');
            s.push_str(&csv_field(p));
        }
        s.push('\n');
        for (i, p) in self.phenomena.iter().enumerate() {
            s.push_str(&csv_field(p));
            for v in &self.values[i] {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Builds the phenomenon-by-phenomenon overlap matrix. `select` restricts
/// the phenomena; naming one the dataset lacks is an error.
pub fn phenomenon_matrix(
    dataset: &Dataset,
    select: Option<&[String]>,
    measure: &Measure,
    sample_size: usize,
    seed: u64,
) -> Result<SimilarityMatrix> {
    if sample_size == 0 {
        return Err(Error::InvalidInput("sample_size must be at least 1".into()));
    }
    let mut groups = phenomenon_sentences(dataset);
    if let Some(select) = select {
        for p in select {
            if !groups.contains_key(p) {
                return Err(Error::InvalidInput(format!("unknown phenomenon {p:?}")));
            }
        }
        groups.retain(|k, _| select.contains(k));
    }
    let phenomena: Vec<String> = groups.keys().cloned().collect();
    let bags: Vec<Vec<TokenBag>> = groups
        .values()
        .map(|v| v.iter().map(|s| measure.bag(s)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;

    let k = phenomena.len();
    let cells: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(cells.len().max(1));
    let chunk = cells.len().div_ceil(workers).max(1);
    let computed: Vec<Result<Vec<(f64, usize)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .chunks(chunk)
            .map(|part| {
                let (phenomena, bags) = (&phenomena, &bags);
                scope.spawn(move || {
                    part.iter()
                        .map(|&(i, j)| {
                            cell(
                                &bags[i],
                                &bags[j],
                                measure,
                                sample_size,
                                derive_seed(seed, &[&phenomena[i], &phenomena[j]]),
                            )
                        })
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("similarity worker panicked"))
            .collect()
    });

    let mut values = vec![vec![0.0; k]; k];
    let mut counts = vec![vec![0; k]; k];
    for ((i, j), (v, n)) in cells.into_iter().zip(
        computed
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten(),
    ) {
        values[i][j] = v;
        counts[i][j] = n;
    }
    Ok(SimilarityMatrix {
        kind: measure.kind,
        phenomena,
        values,
        counts,
        sample_size,
    })
}

fn cell(
    test: &[TokenBag],
    prefix: &[TokenBag],
    measure: &Measure,
    sample_size: usize,
    seed: u64,
) -> Result<(f64, usize)> {
    let total = test.len() * prefix.len();
    let picks: Vec<usize> = if sample_size >= total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut v = index::sample(&mut rng, total, sample_size).into_vec();
        v.sort_unstable();
        v
    };
    let mut sum = 0.0;
    for &p in &picks {
        sum += measure.f1(&test[p / prefix.len()], &prefix[p % prefix.len()])?;
    }
    Ok((sum / picks.len() as f64, picks.len()))
}

/// Point-biserial correlation between per-instance similarity and
/// correctness.
pub fn correlate_similarity_accuracy(per_instance: &[(f64, u8)]) -> Result<Correlation> {
    let (sim, correct): (Vec<f64>, Vec<u8>) = per_instance.iter().copied().unzip();
    point_biserial(&correct, &sim)
}
