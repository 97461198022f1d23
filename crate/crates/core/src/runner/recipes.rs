//! Analyses built on top of the main pipeline: the suite-by-suite
//! cross-priming matrix and the similarity analyses.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::DatasetKind;
use super::manifest::{fields_digest, write_atomic};
use super::output::{read_csv, strategy_columns, write_csv, write_jsonl, TrialRow};
use super::pipeline::{
    score_all, BackendCounter, Runner, ScoredTrial, TargetIndex, RESULTS_FILE, TRIALS_FILE,
};
use crate::context::{
    baseline_trials, build_single_phenomenon_trials, PrefixStrategy, TargetRef, TrialSpec,
};
use crate::dataset::{Dataset, SentenceId};
use crate::error::{Error, Result};
use crate::similarity::{
    correlate_similarity_accuracy, dataset_sentences, mean_prefix_similarity, phenomenon_matrix,
    phenomenon_sentences, DefaultTokenizer, Measure, SimSentence, SimilarityKind, SimilarityMatrix,
};
use crate::stats::spearman;

pub const CROSS_PRIME_DIR: &str = "cross_prime";
pub const SIMILARITY_DIR: &str = "similarity";

/// One off-diagonal cell: target suite prefixed with sentences of a source
/// suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPrimeCell {
    pub target_suite: String,
    pub target_phenomenon: String,
    pub source_suite: String,
    pub source_phenomenon: String,
    pub n: usize,
    pub prefix_sentences: usize,
    pub mean_prefix_tokens: f64,
    pub accuracy: f64,
    pub baseline_accuracy: f64,
    /// Accuracy change over the unprefixed baseline, in percentage points.
    pub improvement_pp: f64,
}

/// Square matrix CSV, rows are target suites and columns source suites.
/// The diagonal is left empty.
pub fn cross_prime_matrix_csv(suites: &[String], cells: &[CrossPrimeCell]) -> String {
    let lookup: HashMap<(&str, &str), f64> = cells
        .iter()
        .map(|c| {
            (
                (c.target_suite.as_str(), c.source_suite.as_str()),
                c.improvement_pp,
            )
        })
        .collect();
    let mut s = String::from("target_suite");
    for c in suites {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for t in suites {
        s.push_str(t);
        for src in suites {
            s.push(',');
            if t != src {
                if let Some(v) = lookup.get(&(t.as_str(), src.as_str())) {
                    let _ = write!(s, "{v}");
                }
            }
        }
        s.push('\n');
    }
    s
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Combines baseline and single-source results into matrix cells.
pub fn cross_prime_cells(
    scored: &[ScoredTrial],
    prefix_sentences: &BTreeMap<(String, String), usize>,
) -> Result<Vec<CrossPrimeCell>> {
    let mut baseline: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    let mut phenomena: BTreeMap<&str, &str> = BTreeMap::new();
    let mut groups: BTreeMap<(&str, &str), Vec<&ScoredTrial>> = BTreeMap::new();
    for s in scored {
        let r = &s.result;
        phenomena.insert(&r.suite_id, &r.phenomenon);
        match &r.source_suite {
            None => baseline.entry(&r.suite_id).or_default().push(r.correct),
            Some(src) => groups.entry((&r.suite_id, src)).or_default().push(s),
        }
    }
    groups
        .into_iter()
        .map(|((target, source), rs)| {
            let base = baseline.get(target).ok_or_else(|| {
                Error::InvalidInput(format!("suite {target} has no baseline trials"))
            })?;
            let baseline_accuracy = base.iter().filter(|&&c| c).count() as f64 / base.len() as f64;
            let accuracy = rs.iter().filter(|s| s.result.correct).count() as f64 / rs.len() as f64;
            Ok(CrossPrimeCell {
                target_suite: target.to_string(),
                target_phenomenon: phenomena
                    .get(target)
                    .copied()
                    .unwrap_or_default()
                    .to_string(),
                source_suite: source.to_string(),
                source_phenomenon: phenomena
                    .get(source)
                    .copied()
                    .unwrap_or_default()
                    .to_string(),
                n: rs.len(),
                prefix_sentences: prefix_sentences
                    .get(&(target.to_string(), source.to_string()))
                    .copied()
                    .unwrap_or(0),
                mean_prefix_tokens: mean(rs.iter().map(|s| s.result.prefix_tokens as f64)),
                accuracy,
                baseline_accuracy,
                improvement_pp: 100.0 * (accuracy - baseline_accuracy),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub kind: String,
    pub trial_id: String,
    pub dataset: DatasetKind,
    pub suite: String,
    pub strategy_domain: String,
    pub strategy_polarity: String,
    pub checkpoint: usize,
    pub similarity: f64,
    pub correct: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub kind: String,
    pub dataset: String,
    pub strategy_domain: String,
    pub strategy_polarity: String,
    pub n: usize,
    pub rho_pb: Option<f64>,
    pub p_value: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanRow {
    pub kind: String,
    pub n: usize,
    pub rho_s: Option<f64>,
    pub p_value: Option<f64>,
    pub note: String,
}

/// The sentence a trial's prefix is compared against: the acceptable member
/// of a pair, or an item's first grammatical condition.
pub fn target_sentence(dataset: &Dataset, target: &TargetRef) -> Option<SimSentence> {
    match target {
        TargetRef::Pair { suite_id, pair_id } => {
            let p = dataset
                .pair_suite(suite_id)?
                .pairs
                .iter()
                .find(|p| &p.id == pair_id)?;
            Some(SimSentence::new(p.sentence_id(true), p.acceptable.clone()))
        }
        TargetRef::Item { suite_id, item_id } => {
            let item = dataset
                .region_suite(suite_id)?
                .items
                .iter()
                .find(|i| i.item_id == *item_id)?;
            let (name, c) = item.conditions.iter().find(|(_, c)| c.grammatical)?;
            Some(SimSentence::new(
                item.sentence_id(suite_id, name),
                c.regions.text(),
            ))
        }
    }
}

impl Runner {
    fn cross_prime_digest(&self) -> String {
        let cp = &self.config.cross_prime;
        let mut fields: Vec<(&str, String)> = vec![
            ("dataset", cp.dataset.as_str().into()),
            ("polarity", cp.polarity.as_str().into()),
            ("max_sentences", format!("{:?}", cp.max_sentences)),
            ("seed", self.config.seed.to_string()),
            ("backend", self.backend.info().backend_id),
            ("model", self.config.model_id.clone()),
        ];
        fields.extend(self.inputs.digests.values().map(|d| ("input", d.clone())));
        fields_digest(fields)
    }

    /// Prefixes each suite with as many sentences as possible from every
    /// other suite and reports the accuracy change in percentage points.
    pub fn cross_prime(&mut self) -> Result<Vec<CrossPrimeCell>> {
        let digest = self.cross_prime_digest();
        let dir = self.out_dir().join(CROSS_PRIME_DIR);
        let cells_rel = format!("{CROSS_PRIME_DIR}/cells.csv");
        if self.is_complete("cross_prime", &digest) {
            return read_csv(&self.out_dir().join(&cells_rel));
        }
        let started = Instant::now();
        let cp = self.config.cross_prime.clone();
        let pools = self.inputs.pools(cp.dataset);
        if pools.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "cross-priming needs at least two {} suites, found {}",
                cp.dataset.as_str(),
                pools.len()
            )));
        }
        let mut trials: Vec<TrialSpec> = Vec::new();
        let mut counts = BTreeMap::new();
        for target in &pools {
            trials.extend(baseline_trials(target, self.config.seed));
            for source in &pools {
                if source.suite_id == target.suite_id {
                    continue;
                }
                let available = source.sentences(cp.polarity).len();
                let count = cp.max_sentences.map_or(available, |m| m.min(available));
                if count == 0 {
                    continue;
                }
                counts.insert((target.suite_id.clone(), source.suite_id.clone()), count);
                trials.extend(build_single_phenomenon_trials(
                    target,
                    source,
                    cp.polarity,
                    count,
                    self.config.seed,
                    &BackendCounter(self.backend.as_ref()),
                )?);
            }
        }
        let index = TargetIndex::new(&self.inputs.dataset);
        let scored = score_all(
            &trials,
            &index,
            self.backend.as_ref(),
            Some(self.cache()),
            &self.config.model_id,
            self.workers(),
        )?;
        let cells = cross_prime_cells(&scored, &counts)?;
        let suites: Vec<String> = pools.iter().map(|p| p.suite_id.clone()).collect();

        write_jsonl(&dir.join(TRIALS_FILE), &trials)?;
        let rows: Vec<TrialRow> = scored
            .iter()
            .map(|s| TrialRow::new(s.dataset, &s.result))
            .collect();
        write_csv(&dir.join("trial_results.csv"), &rows)?;
        write_csv(&self.out_dir().join(&cells_rel), &cells)?;
        write_atomic(
            &dir.join("matrix.csv"),
            cross_prime_matrix_csv(&suites, &cells).as_bytes(),
        )?;
        let outputs = [
            format!("{CROSS_PRIME_DIR}/{TRIALS_FILE}"),
            format!("{CROSS_PRIME_DIR}/trial_results.csv"),
            cells_rel,
            format!("{CROSS_PRIME_DIR}/matrix.csv"),
        ];
        self.complete("cross_prime", digest, &outputs, started)?;
        Ok(cells)
    }

    /// Phenomenon similarity matrices, per-trial prefix similarity and its
    /// correlation with accuracy, and (when a cross-priming matrix exists)
    /// the rank correlation between similarity and cross-priming gains.
    pub fn similarity(&mut self) -> Result<Vec<String>> {
        let trials = self.trials()?;
        let scored = self.score()?;
        let a = self.config.analysis.clone();
        let cells_path = self.out_dir().join(CROSS_PRIME_DIR).join("cells.csv");
        let cross = if self.is_complete("cross_prime", &self.cross_prime_digest()) {
            Some(super::manifest::file_digest(&cells_path)?)
        } else {
            None
        };
        let mut fields: Vec<(&str, String)> = vec![
            (
                "results",
                super::manifest::file_digest(&self.out_dir().join(RESULTS_FILE))?,
            ),
            ("kinds", format!("{:?}", a.similarity_kinds)),
            ("overlap", format!("{:?}", a.overlap)),
            ("sample", a.similarity_sample.to_string()),
            ("seed", self.config.seed.to_string()),
            ("cross_prime", cross.clone().unwrap_or_default()),
        ];
        fields.extend(self.inputs.digests.values().map(|d| ("input", d.clone())));
        let digest = fields_digest(fields);
        if self.is_complete("similarity", &digest) {
            return Ok(self.manifest().stages["similarity"]
                .outputs
                .keys()
                .cloned()
                .collect());
        }
        let started = Instant::now();
        let cross_cells: Option<Vec<CrossPrimeCell>> = match cross {
            Some(_) => Some(read_csv(&cells_path)?),
            None => None,
        };

        let mut texts: HashMap<SentenceId, String> = dataset_sentences(&self.inputs.dataset)
            .into_iter()
            .map(|s| (s.id, s.text))
            .collect();
        if let Some(c) = &self.inputs.corpus {
            for (i, s) in c.sentences.iter().enumerate() {
                texts.insert(c.sentence_id(i), s.clone());
            }
        }

        let tokenizer = DefaultTokenizer;
        let mut outputs = Vec::new();
        let mut instances = Vec::new();
        let mut correlations = Vec::new();
        let mut spearman_rows = Vec::new();
        for kind in &a.similarity_kinds {
            let measure = match kind {
                SimilarityKind::Token => Measure::token(&tokenizer),
                SimilarityKind::Dependency => match &self.inputs.annotations {
                    Some(t) => Measure::dependency(Some(t)),
                    None => {
                        log::warn!(
                            "similarity: no [data] annotations, dependency similarity skipped"
                        );
                        continue;
                    }
                },
            }
            .with_mode(a.overlap);

            // Unannotated phenomena would make every dependency cell undefined.
            let select: Option<Vec<String>> = match (kind, &self.inputs.annotations) {
                (SimilarityKind::Dependency, Some(table)) => {
                    let (kept, dropped): (Vec<_>, Vec<_>) =
                        phenomenon_sentences(&self.inputs.dataset)
                            .into_iter()
                            .partition(|(_, ss)| ss.iter().all(|s| table.get(&s.id).is_some()));
                    if !dropped.is_empty() {
                        let names: Vec<&str> = dropped.iter().map(|(p, _)| p.as_str()).collect();
                        log::warn!(
                            "similarity: no dependency annotations for {}",
                            names.join(", ")
                        );
                    }
                    Some(kept.into_iter().map(|(p, _)| p).collect())
                }
                _ => None,
            };
            if select.as_ref().is_some_and(|s| s.is_empty()) {
                log::warn!(
                    "similarity: no fully annotated phenomenon, dependency similarity skipped"
                );
                continue;
            }
            let matrix = phenomenon_matrix(
                &self.inputs.dataset,
                select.as_deref(),
                &measure,
                a.similarity_sample,
                self.config.seed,
            )?;
            let rel = format!("{SIMILARITY_DIR}/matrix_{}.csv", kind.as_str());
            write_atomic(&self.out_dir().join(&rel), matrix.to_csv().as_bytes())?;
            outputs.push(rel);

            let mut groups: BTreeMap<
                (DatasetKind, Option<PrefixStrategy>),
                (Vec<(f64, u8)>, usize),
            > = BTreeMap::new();
            for (spec, s) in trials.iter().zip(&scored) {
                if spec.is_baseline() || spec.prefix.sentence_ids.is_empty() {
                    continue;
                }
                let entry = groups.entry((s.dataset, spec.strategy)).or_default();
                let Some(target) = target_sentence(&self.inputs.dataset, &spec.target) else {
                    entry.1 += 1;
                    continue;
                };
                let prefix: Option<Vec<SimSentence>> = spec
                    .prefix
                    .sentence_ids
                    .iter()
                    .map(|id| {
                        texts
                            .get(id)
                            .map(|t| SimSentence::new(id.clone(), t.clone()))
                    })
                    .collect();
                let sim = prefix.and_then(|p| mean_prefix_similarity(&p, &target, &measure).ok());
                let Some(sim) = sim else {
                    // Dependency similarity is undefined for unannotated
                    // (e.g. control corpus) sentences.
                    entry.1 += 1;
                    continue;
                };
                let correct = u8::from(s.result.correct);
                entry.0.push((sim, correct));
                let (strategy_domain, strategy_polarity) = strategy_columns(spec.strategy);
                instances.push(InstanceRow {
                    kind: kind.as_str().into(),
                    trial_id: spec.id.clone(),
                    dataset: s.dataset,
                    suite: s.result.suite_id.clone(),
                    strategy_domain,
                    strategy_polarity,
                    checkpoint: spec.prefix.checkpoint,
                    similarity: sim,
                    correct,
                });
            }
            for ((dataset, strategy), (values, skipped)) in groups {
                let (strategy_domain, strategy_polarity) = strategy_columns(strategy);
                let mut row = CorrelationRow {
                    kind: kind.as_str().into(),
                    dataset: dataset.as_str().into(),
                    strategy_domain,
                    strategy_polarity,
                    n: values.len(),
                    rho_pb: None,
                    p_value: None,
                    note: if skipped > 0 {
                        format!("{skipped} trials without similarity")
                    } else {
                        String::new()
                    },
                };
                match correlate_similarity_accuracy(&values) {
                    Ok(c) => {
                        row.rho_pb = Some(c.coefficient);
                        row.p_value = Some(c.p_value);
                    }
                    Err(e) => {
                        let msg = e.to_string();
                        row.note = if row.note.is_empty() {
                            msg
                        } else {
                            format!("{}; {msg}", row.note)
                        };
                    }
                }
                correlations.push(row);
            }

            if let Some(cells) = &cross_cells {
                spearman_rows.push(similarity_vs_cross_priming(kind.as_str(), &matrix, cells));
            }
        }

        let instances_rel = format!("{SIMILARITY_DIR}/instances.csv");
        let correlations_rel = format!("{SIMILARITY_DIR}/correlations.csv");
        write_csv(&self.out_dir().join(&instances_rel), &instances)?;
        write_csv(&self.out_dir().join(&correlations_rel), &correlations)?;
        outputs.push(instances_rel);
        outputs.push(correlations_rel);
        if cross_cells.is_some() {
            let rel = format!("{SIMILARITY_DIR}/spearman_cross_prime.csv");
            write_csv(&self.out_dir().join(&rel), &spearman_rows)?;
            outputs.push(rel);
        }
        self.complete("similarity", digest, &outputs, started)?;
        Ok(outputs)
    }
}

/// Spearman correlation between phenomenon similarity and cross-priming
/// improvement over off-diagonal cells whose phenomena differ.
pub fn similarity_vs_cross_priming(
    kind: &str,
    matrix: &SimilarityMatrix,
    cells: &[CrossPrimeCell],
) -> SpearmanRow {
    let (mut sim, mut gain) = (Vec::new(), Vec::new());
    for c in cells {
        if c.target_phenomenon == c.source_phenomenon {
            continue;
        }
        if let Some(v) = matrix.get(&c.target_phenomenon, &c.source_phenomenon) {
            sim.push(v);
            gain.push(c.improvement_pp);
        }
    }
    let mut row = SpearmanRow {
        kind: kind.into(),
        n: sim.len(),
        rho_s: None,
        p_value: None,
        note: String::new(),
    };
    match spearman(&sim, &gain) {
        Ok(c) => {
            row.rho_s = Some(c.coefficient);
            row.p_value = Some(c.p_value);
        }
        Err(e) => row.note = e.to_string(),
    }
    row
}
