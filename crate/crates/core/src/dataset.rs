//! Benchmark ingestion: minimal-pair suites, multi-condition region suites,
//! and plain-text control corpora.
//!
//! Pair suites use the BLiMP line layout (one JSON object per line with
//! `sentence_good`, `sentence_bad`, `UID`, `linguistics_term`, `pairID`).
//! Region suites use a small JSON document described in
//! `docs/region-suite.schema.json`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::{self, Formula};

/// Stable identifier of a sentence anywhere in a loaded dataset.
///
/// Pair sentences are `suite:pair:good` / `suite:pair:bad`, region-suite
/// sentences are `suite:item:condition`, corpus sentences `corpus:line`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentenceId(pub String);

impl SentenceId {
    pub fn pair(suite: &str, pair: &str, acceptable: bool) -> Self {
        let side = if acceptable { "good" } else { "bad" };
        SentenceId(format!("{suite}:{pair}:{side}"))
    }

    pub fn region(suite: &str, item: u32, condition: &str) -> Self {
        SentenceId(format!("{suite}:{item}:{condition}"))
    }

    pub fn corpus(name: &str, index: usize) -> Self {
        SentenceId(format!("{name}:{index}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SentenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub id: String,
    pub suite_id: String,
    pub phenomenon: String,
    pub acceptable: String,
    pub unacceptable: String,
}

impl MinimalPair {
    pub fn sentence_id(&self, acceptable: bool) -> SentenceId {
        SentenceId::pair(&self.suite_id, &self.id, acceptable)
    }

    pub fn sentence(&self, acceptable: bool) -> &str {
        if acceptable {
            &self.acceptable
        } else {
            &self.unacceptable
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSuite {
    pub suite_id: String,
    pub phenomenon: String,
    pub pairs: Vec<MinimalPair>,
}

/// One line of a BLiMP-style pair file. Fields not listed are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub sentence_good: String,
    pub sentence_bad: String,
    #[serde(rename = "UID", default, skip_serializing_if = "Option::is_none")]
    pub uid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linguistics_term: Option<String>,
    #[serde(rename = "pairID", default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<serde_json::Value>,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".to_string())
}

/// Loads one pair suite from a line-delimited file.
pub fn load_pair_suite(path: impl AsRef<Path>) -> Result<PairSuite> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_pair_suite(&text, path)
}

/// Parses pair-suite text; `path` is only used in error messages and as the
/// fallback suite id when records carry no `UID`.
pub fn parse_pair_suite(text: &str, path: &Path) -> Result<PairSuite> {
    let record_err = |line: usize, message: String| Error::Record {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut suite_id: Option<String> = None;
    let mut phenomenon: Option<String> = None;
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(line)
            .map_err(|e| record_err(lineno, format!("malformed record: {e}")))?;

        let good = rec.sentence_good.trim();
        let bad = rec.sentence_bad.trim();
        if good.is_empty() || bad.is_empty() {
            return Err(record_err(lineno, "empty sentence".into()));
        }
        if good == bad {
            return Err(record_err(
                lineno,
                "acceptable and unacceptable sentences are identical".into(),
            ));
        }

        let uid = rec.uid.clone().unwrap_or_else(|| file_stem(path));
        match &suite_id {
            None => suite_id = Some(uid.clone()),
            Some(s) if *s != uid => {
                return Err(record_err(
                    lineno,
                    format!("record belongs to suite {uid:?}, file started with {s:?}"),
                ))
            }
            Some(_) => {}
        }
        let term = rec.linguistics_term.clone().unwrap_or_else(|| uid.clone());
        if phenomenon.is_none() {
            phenomenon = Some(term.clone());
        }

        let id = match &rec.pair_id {
            None => (pairs.len()).to_string(),
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            Some(other) => return Err(record_err(lineno, format!("unsupported pairID {other}"))),
        };
        if !seen.insert(id.clone()) {
            return Err(record_err(lineno, format!("duplicate pair id {id:?}")));
        }

        pairs.push(MinimalPair {
            id,
            suite_id: uid,
            phenomenon: term,
            acceptable: good.to_string(),
            unacceptable: bad.to_string(),
        });
    }

    let (Some(suite_id), Some(phenomenon)) = (suite_id, phenomenon) else {
        return Err(Error::dataset(path, "empty file"));
    };
    Ok(PairSuite {
        suite_id,
        phenomenon,
        pairs,
    })
}

impl PairSuite {
    /// Record form suitable for writing back out as a pair file.
    pub fn to_records(&self) -> Vec<PairRecord> {
        self.pairs
            .iter()
            .map(|p| PairRecord {
                sentence_good: p.acceptable.clone(),
                sentence_bad: p.unacceptable.clone(),
                uid: Some(p.suite_id.clone()),
                linguistics_term: Some(p.phenomenon.clone()),
                pair_id: Some(serde_json::Value::String(p.id.clone())),
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in self.to_records() {
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// One region of a segmented sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub region_number: u32,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionSequence {
    pub regions: Vec<Region>,
}

impl RegionSequence {
    pub fn new(contents: &[&str]) -> Self {
        RegionSequence {
            regions: contents
                .iter()
                .enumerate()
                .map(|(i, c)| Region {
                    region_number: i as u32 + 1,
                    content: c.to_string(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// The full sentence: non-empty region contents joined by single spaces.
    pub fn text(&self) -> String {
        self.regions
            .iter()
            .map(|r| r.content.trim())
            .filter(|c| !c.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Character spans `(region_number, start, end)` of each region within
    /// [`text`](Self::text). A region's span starts right after the previous
    /// non-empty region, so the separating space belongs to the region that
    /// follows it. Empty regions get an empty span.
    pub fn char_spans(&self) -> Vec<(u32, usize, usize)> {
        let mut spans = Vec::with_capacity(self.regions.len());
        let mut cursor = 0usize;
        let mut any = false;
        for r in &self.regions {
            let content = r.content.trim();
            if content.is_empty() {
                spans.push((r.region_number, cursor, cursor));
                continue;
            }
            let start = cursor;
            let sep = usize::from(any);
            cursor += sep + content.chars().count();
            any = true;
            spans.push((r.region_number, start, cursor));
        }
        spans
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for (i, r) in self.regions.iter().enumerate() {
            if r.region_number != i as u32 + 1 {
                return Err(format!(
                    "region numbers must be consecutive from 1, found {} at position {}",
                    r.region_number,
                    i + 1
                ));
            }
        }
        if self.text().is_empty() {
            return Err("all regions are empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub grammatical: bool,
    pub regions: RegionSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedItem {
    pub item_id: u32,
    pub conditions: BTreeMap<String, Condition>,
    pub prediction: String,
    pub formula: Formula,
}

impl ConditionedItem {
    pub fn sentence_id(&self, suite_id: &str, condition: &str) -> SentenceId {
        SentenceId::region(suite_id, self.item_id, condition)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSuite {
    pub suite_id: String,
    pub phenomenon: String,
    pub region_names: Vec<String>,
    pub items: Vec<ConditionedItem>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RegionSuiteDoc {
    suite: String,
    #[serde(default)]
    phenomenon: Option<String>,
    region_names: Vec<String>,
    items: Vec<RegionItemDoc>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RegionItemDoc {
    item_id: u32,
    prediction: String,
    conditions: Vec<ConditionDoc>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ConditionDoc {
    name: String,
    grammatical: bool,
    regions: Vec<Region>,
}

/// Loads a multi-condition region suite document.
pub fn load_region_suite(path: impl AsRef<Path>) -> Result<RegionSuite> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_region_suite(&text, path)
}

pub fn parse_region_suite(text: &str, path: &Path) -> Result<RegionSuite> {
    let doc: RegionSuiteDoc = serde_json::from_str(text)
        .map_err(|e| Error::dataset(path, format!("malformed suite: {e}")))?;
    let fail = |item: u32, message: String| Error::dataset(path, format!("item {item}: {message}"));

    if doc.suite.trim().is_empty() {
        return Err(Error::dataset(path, "suite name is empty"));
    }
    if doc.items.is_empty() {
        return Err(Error::dataset(path, "suite has no items"));
    }

    let n_regions = doc.region_names.len();
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(doc.items.len());
    for item in doc.items {
        let id = item.item_id;
        if !seen.insert(id) {
            return Err(fail(id, "duplicate item id".into()));
        }
        if item.conditions.len() < 2 {
            return Err(fail(id, "an item needs at least two conditions".into()));
        }
        let mut conditions = BTreeMap::new();
        for cond in item.conditions {
            if cond.name.trim().is_empty() {
                return Err(fail(id, "empty condition name".into()));
            }
            let regions = RegionSequence {
                regions: cond.regions,
            };
            if n_regions > 0 && regions.len() != n_regions {
                return Err(fail(
                    id,
                    format!(
                        "region count mismatch: condition {:?} has {} regions, suite declares {}",
                        cond.name,
                        regions.len(),
                        n_regions
                    ),
                ));
            }
            regions
                .validate()
                .map_err(|m| fail(id, format!("condition {:?}: {m}", cond.name)))?;
            let name = cond.name.clone();
            if conditions
                .insert(
                    cond.name,
                    Condition {
                        grammatical: cond.grammatical,
                        regions,
                    },
                )
                .is_some()
            {
                return Err(fail(id, format!("duplicate condition {name:?}")));
            }
        }
        let counts: BTreeSet<usize> = conditions.values().map(|c| c.regions.len()).collect();
        if counts.len() > 1 {
            return Err(fail(id, "region count mismatch across conditions".into()));
        }
        let n_here = *counts.iter().next().expect("at least two conditions");

        let formula = prediction::parse(&item.prediction)
            .map_err(|e| fail(id, format!("unparseable prediction: {e}")))?;
        for r in formula.refs() {
            if !conditions.contains_key(&r.condition) {
                return Err(fail(
                    id,
                    format!("prediction references unknown condition {:?}", r.condition),
                ));
            }
            if r.region as usize > n_here {
                return Err(fail(
                    id,
                    format!("prediction references region {} of {n_here}", r.region),
                ));
            }
        }
        items.push(ConditionedItem {
            item_id: id,
            conditions,
            prediction: item.prediction,
            formula,
        });
    }

    Ok(RegionSuite {
        phenomenon: doc.phenomenon.unwrap_or_else(|| doc.suite.clone()),
        suite_id: doc.suite,
        region_names: doc.region_names,
        items,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSource {
    pub name: String,
    pub sentences: Vec<String>,
}

impl CorpusSource {
    pub fn sentence_id(&self, index: usize) -> SentenceId {
        SentenceId::corpus(&self.name, index)
    }
}

/// Loads a one-sentence-per-line corpus. Blank lines are dropped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusSource> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let sentences: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if sentences.is_empty() {
        return Err(Error::dataset(path, "zero usable sentences"));
    }
    Ok(CorpusSource {
        name: file_stem(path),
        sentences,
    })
}

/// Every loaded benchmark suite, in load order.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub pair_suites: Vec<PairSuite>,
    pub region_suites: Vec<RegionSuite>,
}

impl Dataset {
    pub fn pair_suite(&self, id: &str) -> Option<&PairSuite> {
        self.pair_suites.iter().find(|s| s.suite_id == id)
    }

    pub fn region_suite(&self, id: &str) -> Option<&RegionSuite> {
        self.region_suites.iter().find(|s| s.suite_id == id)
    }

    pub fn validate_unique_suites(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self
            .pair_suites
            .iter()
            .map(|s| &s.suite_id)
            .chain(self.region_suites.iter().map(|s| &s.suite_id))
        {
            if !seen.insert(id) {
                return Err(Error::InvalidInput(format!("suite {id:?} loaded twice")));
            }
        }
        Ok(())
    }
}
