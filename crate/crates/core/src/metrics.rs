//! Acceptability judgements and their aggregates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::context::PrefixStrategy;
use crate::dataset::ConditionedItem;
use crate::error::{Error, Result};
use crate::prediction::{self, SurprisalTable};

/// Region surprisals per condition: condition name -> region number -> surprisal.
pub type ConditionSurprisals = BTreeMap<String, BTreeMap<u32, f64>>;

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidInput(format!("{what} is not finite: {x}")))
    }
}

/// 1 when the acceptable sentence is strictly preferred, else 0.
pub fn pair_accuracy(p_acceptable: f64, p_unacceptable: f64) -> Result<u8> {
    let a = finite(p_acceptable, "acceptable log-likelihood")?;
    let b = finite(p_unacceptable, "unacceptable log-likelihood")?;
    Ok(u8::from(a > b))
}

/// Preference margin of the acceptable sentence over the unacceptable one.
pub fn margin(p_acceptable: f64, p_unacceptable: f64) -> Result<f64> {
    let a = finite(p_acceptable, "acceptable log-likelihood")?;
    let b = finite(p_unacceptable, "unacceptable log-likelihood")?;
    Ok(a - b)
}

/// Flattens per-condition tables into the lookup the formula evaluator uses.
pub fn surprisal_table(surprisals: &ConditionSurprisals) -> SurprisalTable {
    surprisals
        .iter()
        .flat_map(|(cond, regions)| regions.iter().map(move |(&k, &v)| ((k, cond.clone()), v)))
        .collect()
}

/// 1 when the item's prediction holds on the given surprisals.
pub fn item_accuracy(item: &ConditionedItem, surprisals: &ConditionSurprisals) -> Result<u8> {
    let ok = prediction::evaluate(&item.formula, &surprisal_table(surprisals))?;
    Ok(u8::from(ok))
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// Mean prefixed accuracy minus mean unprefixed accuracy over the same items.
pub fn baselined_accuracy(prefixed: &[u8], baseline: &[u8]) -> Result<f64> {
    if prefixed.is_empty() || baseline.is_empty() {
        return Err(Error::InvalidInput(
            "baselined accuracy needs non-empty inputs".into(),
        ));
    }
    if prefixed.len() != baseline.len() {
        return Err(Error::InvalidInput(format!(
            "prefixed and baseline lists differ in length ({} vs {})",
            prefixed.len(),
            baseline.len()
        )));
    }
    let acc = |xs: &[u8]| mean(xs.iter().map(|&x| f64::from(x)));
    Ok(acc(prefixed) - acc(baseline))
}

/// Raw scores behind one judgement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pair {
        loglik_acceptable: f64,
        loglik_unacceptable: f64,
    },
    Item {
        surprisals: ConditionSurprisals,
    },
}

/// One scored trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: String,
    pub suite_id: String,
    pub phenomenon: String,
    pub target: String,
    pub strategy: Option<PrefixStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_suite: Option<String>,
    pub checkpoint: usize,
    pub prefix_tokens: usize,
    pub outcome: Outcome,
    pub correct: bool,
}

impl TrialResult {
    pub fn margin(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Pair {
                loglik_acceptable,
                loglik_unacceptable,
            } => Some(loglik_acceptable - loglik_unacceptable),
            Outcome::Item { .. } => None,
        }
    }

    /// Recomputes `correct` from the stored scores.
    pub fn recompute_correct(&self, item: Option<&ConditionedItem>) -> Result<bool> {
        match &self.outcome {
            Outcome::Pair {
                loglik_acceptable,
                loglik_unacceptable,
            } => Ok(pair_accuracy(*loglik_acceptable, *loglik_unacceptable)? == 1),
            Outcome::Item { surprisals } => {
                let item =
                    item.ok_or_else(|| Error::InvalidInput("item results need their item".into()))?;
                Ok(item_accuracy(item, surprisals)? == 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub suite_id: String,
    pub phenomenon: String,
    pub strategy: Option<PrefixStrategy>,
    pub checkpoint: usize,
    pub n: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub baselined_accuracy: f64,
    /// `None` for multi-condition suites, which have no pairwise margin.
    pub mean_margin: Option<f64>,
    pub mean_prefix_tokens: f64,
}

type CellKey = (String, Option<PrefixStrategy>, usize);

/// Groups results by (suite, strategy, checkpoint). Baseline trials form the
/// `(suite, None, 0)` group, which every other group of that suite is
/// measured against.
pub fn aggregate(results: &[TrialResult]) -> Result<Vec<AggregateCell>> {
    let mut groups: BTreeMap<CellKey, Vec<&TrialResult>> = BTreeMap::new();
    for r in results {
        groups
            .entry((r.suite_id.clone(), r.strategy, r.checkpoint))
            .or_default()
            .push(r);
    }

    let mut baseline_acc: BTreeMap<String, f64> = BTreeMap::new();
    for ((suite, strategy, _), rs) in &groups {
        if strategy.is_none() {
            let correct = rs.iter().filter(|r| r.correct).count();
            baseline_acc.insert(suite.clone(), correct as f64 / rs.len() as f64);
        }
    }

    let mut cells = Vec::with_capacity(groups.len());
    for ((suite, strategy, checkpoint), rs) in groups {
        let n = rs.len();
        let n_correct = rs.iter().filter(|r| r.correct).count();
        let accuracy = n_correct as f64 / n as f64;
        let base = *baseline_acc
            .get(&suite)
            .ok_or_else(|| Error::InvalidInput(format!("suite {suite} has no baseline trials")))?;
        let baselined_accuracy = if strategy.is_none() {
            0.0
        } else {
            accuracy - base
        };
        let margins: Vec<f64> = rs.iter().filter_map(|r| r.margin()).collect();
        let mean_margin = (margins.len() == n).then(|| mean(margins.iter().copied()));
        cells.push(AggregateCell {
            phenomenon: rs[0].phenomenon.clone(),
            suite_id: suite,
            strategy,
            checkpoint,
            n,
            n_correct,
            accuracy,
            baselined_accuracy,
            mean_margin,
            mean_prefix_tokens: mean(rs.iter().map(|r| r.prefix_tokens as f64)),
        });
    }
    Ok(cells)
}

/// How per-suite cells are combined into one number per (strategy, checkpoint).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Every suite weighs the same.
    #[default]
    Macro,
    /// Every trial weighs the same.
    Micro,
}

impl Averaging {
    pub fn as_str(self) -> &'static str {
        match self {
            Averaging::Macro => "macro",
            Averaging::Micro => "micro",
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "macro" => Ok(Averaging::Macro),
            "micro" => Ok(Averaging::Micro),
            other => Err(Error::InvalidInput(format!(
                "unknown averaging mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: Option<PrefixStrategy>,
    pub checkpoint: usize,
    pub averaging: Averaging,
    pub n_suites: usize,
    pub n: usize,
    pub accuracy: f64,
    pub baselined_accuracy: f64,
    pub mean_margin: Option<f64>,
}

/// Collapses per-suite cells across suites.
pub fn summarize(cells: &[AggregateCell], averaging: Averaging) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Option<PrefixStrategy>, usize), Vec<&AggregateCell>> =
        BTreeMap::new();
    for c in cells {
        groups
            .entry((c.strategy, c.checkpoint))
            .or_default()
            .push(c);
    }
    let baselines: BTreeMap<&str, &AggregateCell> = cells
        .iter()
        .filter(|c| c.strategy.is_none())
        .map(|c| (c.suite_id.as_str(), c))
        .collect();

    groups
        .into_iter()
        .map(|((strategy, checkpoint), cs)| {
            let n: usize = cs.iter().map(|c| c.n).sum();
            let suites: BTreeSet<&str> = cs.iter().map(|c| c.suite_id.as_str()).collect();
            let (accuracy, baselined_accuracy, mean_margin) = match averaging {
                Averaging::Macro => {
                    let acc = mean(cs.iter().map(|c| c.accuracy));
                    let base = mean(cs.iter().map(|c| c.baselined_accuracy));
                    let margin = cs
                        .iter()
                        .map(|c| c.mean_margin)
                        .collect::<Option<Vec<f64>>>()
                        .map(|m| mean(m.into_iter()));
                    (acc, base, margin)
                }
                Averaging::Micro => {
                    let correct: usize = cs.iter().map(|c| c.n_correct).sum();
                    let acc = correct as f64 / n as f64;
                    let (b_correct, b_n) = suites
                        .iter()
                        .filter_map(|s| baselines.get(s))
                        .fold((0usize, 0usize), |(c, n), b| (c + b.n_correct, n + b.n));
                    let base = if strategy.is_none() || b_n == 0 {
                        0.0
                    } else {
                        acc - b_correct as f64 / b_n as f64
                    };
                    let margin = cs
                        .iter()
                        .map(|c| c.mean_margin.map(|m| m * c.n as f64))
                        .collect::<Option<Vec<f64>>>()
                        .map(|m| m.into_iter().sum::<f64>() / n as f64);
                    (acc, base, margin)
                }
            };
            SummaryRow {
                strategy,
                checkpoint,
                averaging,
                n_suites: suites.len(),
                n,
                accuracy,
                baselined_accuracy,
                mean_margin,
            }
        })
        .collect()
}
