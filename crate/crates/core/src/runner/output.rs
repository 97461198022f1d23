//! CSV rows written by the pipeline.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a CSV
//! re-read and re-written is byte-identical and every number can be traced
//! back to the raw scores.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::context::PrefixStrategy;
use crate::error::{Error, Result};
use crate::metrics::{AggregateCell, Outcome, SummaryRow, TrialResult};
use crate::runner::config::DatasetKind;
use crate::runner::manifest::write_atomic;
use crate::stats::RegressionFit;

pub fn strategy_columns(s: Option<PrefixStrategy>) -> (String, String) {
    match s {
        None => ("baseline".into(), "not_applicable".into()),
        Some(s) => (s.domain().as_str().into(), s.polarity().as_str().into()),
    }
}

/// Parses the two strategy columns back; `None` is the baseline.
pub fn parse_strategy_columns(domain: &str, polarity: &str) -> Result<Option<PrefixStrategy>> {
    match domain {
        "baseline" => Ok(None),
        "control" => Ok(Some(PrefixStrategy::CONTROL)),
        _ => format!("{domain}:{polarity}").parse().map(Some),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial_id: String,
    pub dataset: DatasetKind,
    pub suite: String,
    pub phenomenon: String,
    pub target: String,
    pub strategy_domain: String,
    pub strategy_polarity: String,
    pub source_suite: String,
    pub checkpoint: usize,
    pub prefix_tokens: usize,
    pub loglik_acceptable: Option<f64>,
    pub loglik_unacceptable: Option<f64>,
    pub margin: Option<f64>,
    pub correct: u8,
}

impl TrialRow {
    pub fn new(dataset: DatasetKind, r: &TrialResult) -> Self {
        let (strategy_domain, strategy_polarity) = strategy_columns(r.strategy);
        let (la, lu) = match r.outcome {
            Outcome::Pair {
                loglik_acceptable,
                loglik_unacceptable,
            } => (Some(loglik_acceptable), Some(loglik_unacceptable)),
            Outcome::Item { .. } => (None, None),
        };
        TrialRow {
            trial_id: r.trial_id.clone(),
            dataset,
            suite: r.suite_id.clone(),
            phenomenon: r.phenomenon.clone(),
            target: r.target.clone(),
            strategy_domain,
            strategy_polarity,
            source_suite: r.source_suite.clone().unwrap_or_default(),
            checkpoint: r.checkpoint,
            prefix_tokens: r.prefix_tokens,
            loglik_acceptable: la,
            loglik_unacceptable: lu,
            margin: r.margin(),
            correct: u8::from(r.correct),
        }
    }

    pub fn strategy(&self) -> Result<Option<PrefixStrategy>> {
        parse_strategy_columns(&self.strategy_domain, &self.strategy_polarity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub suite: String,
    pub phenomenon: String,
    pub strategy_domain: String,
    pub strategy_polarity: String,
    pub checkpoint: usize,
    pub n: usize,
    pub accuracy: f64,
    pub baselined_accuracy: f64,
    pub mean_margin: Option<f64>,
    pub mean_actual_prefix_tokens: f64,
}

impl From<&AggregateCell> for AggregateRow {
    fn from(c: &AggregateCell) -> Self {
        let (strategy_domain, strategy_polarity) = strategy_columns(c.strategy);
        AggregateRow {
            suite: c.suite_id.clone(),
            phenomenon: c.phenomenon.clone(),
            strategy_domain,
            strategy_polarity,
            checkpoint: c.checkpoint,
            n: c.n,
            accuracy: c.accuracy,
            baselined_accuracy: c.baselined_accuracy,
            mean_margin: c.mean_margin,
            mean_actual_prefix_tokens: c.mean_prefix_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCsvRow {
    pub dataset: DatasetKind,
    pub averaging: String,
    pub strategy_domain: String,
    pub strategy_polarity: String,
    pub checkpoint: usize,
    pub n_suites: usize,
    pub n: usize,
    pub accuracy: f64,
    pub baselined_accuracy: f64,
    pub mean_margin: Option<f64>,
}

impl SummaryCsvRow {
    pub fn new(dataset: DatasetKind, r: &SummaryRow) -> Self {
        let (strategy_domain, strategy_polarity) = strategy_columns(r.strategy);
        SummaryCsvRow {
            dataset,
            averaging: r.averaging.to_string(),
            strategy_domain,
            strategy_polarity,
            checkpoint: r.checkpoint,
            n_suites: r.n_suites,
            n: r.n,
            accuracy: r.accuracy,
            baselined_accuracy: r.baselined_accuracy,
            mean_margin: r.mean_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub suite: String,
    pub phenomenon: String,
    pub strategy_domain: String,
    pub strategy_polarity: String,
    pub checkpoint: usize,
    pub n: usize,
    pub mean_margin: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub dataset: DatasetKind,
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub penalized: bool,
    pub converged: bool,
    pub separation: bool,
    pub n: usize,
    pub ridge_lambda: f64,
}

pub fn regression_rows(dataset: DatasetKind, fit: &RegressionFit) -> Vec<RegressionRow> {
    fit.coefficients
        .iter()
        .map(|c| RegressionRow {
            dataset,
            term: c.name.clone(),
            estimate: c.estimate,
            std_error: c.std_error,
            z: c.z,
            p_value: c.p_value,
            penalized: c.penalized,
            converged: fit.converged,
            separation: fit.separation,
            n: fit.n,
            ridge_lambda: fit.ridge_lambda,
        })
        .collect()
}

/// Plain-text coefficient table.
pub fn regression_text(dataset: DatasetKind, fit: &RegressionFit) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "dataset: {}", dataset.as_str());
    let _ = writeln!(
        s,
        "logistic regression, n = {}, suite intercepts ridge-penalized (lambda = {}), Wald p-values",
        fit.n, fit.ridge_lambda
    );
    let _ = writeln!(
        s,
        "converged: {}  separation: {}  iterations: {}  log-likelihood: {:.4}",
        fit.converged, fit.separation, fit.iterations, fit.loglik
    );
    let _ = writeln!(s);
    let width = fit
        .coefficients
        .iter()
        .map(|c| c.name.len())
        .max()
        .unwrap_or(4)
        .max(4);
    let _ = writeln!(
        s,
        "{:<width$}  {:>10}  {:>10}  {:>8}  {:>10}",
        "term", "estimate", "std.err", "z", "p"
    );
    for c in &fit.coefficients {
        let _ = writeln!(
            s,
            "{:<width$}  {:>10.4}  {:>10.4}  {:>8.3}  {:>10.3e}{}",
            c.name,
            c.estimate,
            c.std_error,
            c.z,
            c.p_value,
            if c.penalized { "  (penalized)" } else { "" }
        );
    }
    s
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
}

/// Writes rows atomically. An empty slice still produces a header-less
/// empty file.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::dataset(path, format!("{other:?}")),
    })?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
