//! SVG line plots with bootstrap bands, computed from `trial_results.csv`.
//!
//! One plot per (dataset, metric). Each strategy is a line over checkpoints,
//! starting from the shared unprefixed baseline at checkpoint 0. The band at
//! each point is a percentile bootstrap over units: suites under macro
//! averaging, targets under micro averaging. Every plotted number is also
//! written to `plots/series.csv`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::DatasetKind;
use super::manifest::write_atomic;
use super::output::{csv_bytes, TrialRow};
use crate::context::{derive_seed, PrefixStrategy};
use crate::error::{Error, Result};
use crate::metrics::Averaging;
use crate::stats::bootstrap::{bootstrap_ci, shifted_mean};

pub const PLOT_DIR: &str = "plots";
pub const SERIES_CSV: &str = "plots/series.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub averaging: Averaging,
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Accuracy,
    BaselinedAccuracy,
    Margin,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::BaselinedAccuracy => "baselined_accuracy",
            Metric::Margin => "margin",
        }
    }

    fn axis_label(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::BaselinedAccuracy => "baselined accuracy",
            Metric::Margin => "mean margin (log-likelihood)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub checkpoint: usize,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_units: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub strategy: PrefixStrategy,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub dataset: DatasetKind,
    pub metric: String,
    pub averaging: String,
    pub strategy: String,
    pub checkpoint: usize,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_units: usize,
}

/// Seed for the band at one plotted point.
pub fn band_seed(
    seed: u64,
    dataset: DatasetKind,
    metric: Metric,
    strategy: &str,
    checkpoint: usize,
) -> u64 {
    derive_seed(
        seed,
        &[
            "band",
            dataset.as_str(),
            metric.as_str(),
            strategy,
            &checkpoint.to_string(),
        ],
    )
}

/// Collapses per-target values into bootstrap units.
fn units(values: &[(String, f64)], averaging: Averaging) -> Vec<f64> {
    match averaging {
        Averaging::Micro => values.iter().map(|(_, v)| *v).collect(),
        Averaging::Macro => {
            let mut by_suite: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for (suite, v) in values {
                by_suite.entry(suite).or_default().push(*v);
            }
            by_suite.values().map(|v| shifted_mean(v)).collect()
        }
    }
}

fn point(
    values: &[(String, f64)],
    checkpoint: usize,
    seed: u64,
    opts: &PlotOptions,
) -> Result<Point> {
    let u = units(values, opts.averaging);
    let (ci_low, ci_high) = bootstrap_ci(&u, opts.resamples, opts.level, seed)?;
    Ok(Point {
        checkpoint,
        value: shifted_mean(&u),
        ci_low,
        ci_high,
        n_units: u.len(),
    })
}

/// The lines of one plot. Single-source trials are ignored.
pub fn series(
    rows: &[TrialRow],
    dataset: DatasetKind,
    metric: Metric,
    opts: &PlotOptions,
) -> Result<Vec<Series>> {
    let rows: Vec<&TrialRow> = rows
        .iter()
        .filter(|r| r.dataset == dataset && r.source_suite.is_empty())
        .collect();
    let mut baseline: BTreeMap<&str, &TrialRow> = BTreeMap::new();
    // strategy -> checkpoint -> (suite, value) per target
    let mut groups: BTreeMap<PrefixStrategy, BTreeMap<usize, Vec<(String, f64)>>> = BTreeMap::new();
    for r in &rows {
        match r.strategy()? {
            None => {
                baseline.insert(r.target.as_str(), r);
            }
            Some(s) => {
                groups
                    .entry(s)
                    .or_default()
                    .entry(r.checkpoint)
                    .or_default();
            }
        }
    }
    if baseline.is_empty() {
        return Ok(Vec::new());
    }

    let value_of = |r: &TrialRow| -> Result<Option<f64>> {
        Ok(match metric {
            Metric::Accuracy => Some(f64::from(r.correct)),
            Metric::Margin => r.margin,
            Metric::BaselinedAccuracy => {
                let b = baseline.get(r.target.as_str()).ok_or_else(|| {
                    Error::InvalidInput(format!("target {} has no baseline trial", r.target))
                })?;
                Some(f64::from(r.correct) - f64::from(b.correct))
            }
        })
    };

    for r in &rows {
        if let Some(s) = r.strategy()? {
            if let Some(v) = value_of(r)? {
                groups
                    .get_mut(&s)
                    .expect("registered above")
                    .get_mut(&r.checkpoint)
                    .expect("registered above")
                    .push((r.suite.clone(), v));
            }
        }
    }

    let base_values: Vec<(String, f64)> = baseline
        .values()
        .filter_map(|r| {
            let v = match metric {
                Metric::Accuracy => Some(f64::from(r.correct)),
                Metric::BaselinedAccuracy => Some(0.0),
                Metric::Margin => r.margin,
            };
            v.map(|v| (r.suite.clone(), v))
        })
        .collect();
    let base_point = if base_values.is_empty() {
        None
    } else {
        Some(point(
            &base_values,
            0,
            band_seed(opts.seed, dataset, metric, "baseline", 0),
            opts,
        )?)
    };

    let mut out = Vec::new();
    for (strategy, by_checkpoint) in groups {
        let label = strategy.to_string();
        let mut points: Vec<Point> = base_point.iter().cloned().collect();
        for (checkpoint, values) in by_checkpoint {
            if values.is_empty() {
                continue;
            }
            points.push(point(
                &values,
                checkpoint,
                band_seed(opts.seed, dataset, metric, &label, checkpoint),
                opts,
            )?);
        }
        out.push(Series { strategy, points });
    }
    Ok(out)
}

fn color(s: PrefixStrategy) -> &'static str {
    match s.to_string().as_str() {
        "in_domain:acceptable" => "#1f77b4",
        "in_domain:unacceptable" => "#d62728",
        "out_of_domain:acceptable" => "#2ca02c",
        "out_of_domain:unacceptable" => "#ff7f0e",
        _ => "#9467bd",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const W: f64 = 760.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 56.0;

/// Renders one plot. Degenerate ranges (a single checkpoint, a flat line)
/// are padded so the plot still has extent.
pub fn render_svg(title: &str, metric: Metric, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let checkpoints: BTreeSet<usize> = pts.clone().map(|p| p.checkpoint).collect();
    let (mut x0, mut x1) = (
        checkpoints.first().copied().unwrap_or(0) as f64,
        checkpoints.last().copied().unwrap_or(1) as f64,
    );
    if x1 <= x0 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let (mut y0, mut y1) = pts.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (
            lo.min(p.ci_low).min(p.value),
            hi.max(p.ci_high).max(p.value),
        )
    });
    if metric == Metric::BaselinedAccuracy {
        y0 = y0.min(0.0);
        y1 = y1.max(0.0);
    }
    if !y0.is_finite() || !y1.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    } else {
        let pad = (y1 - y0) * 0.05;
        y0 -= pad;
        y1 += pad;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );

    // Axes and grid.
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * f64::from(i) / 4.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{y:.3}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            py + 4.0
        );
    }
    let ticks: Vec<usize> = if checkpoints.len() <= 12 {
        checkpoints.iter().copied().collect()
    } else {
        let v: Vec<usize> = checkpoints.iter().copied().collect();
        (0..6).map(|i| v[i * (v.len() - 1) / 5]).collect()
    };
    for c in ticks {
        let px = sx(c as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#444"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{c}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 19.0
        );
    }
    if metric == Metric::BaselinedAccuracy && y0 < 0.0 && y1 > 0.0 {
        let py = sy(0.0);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
            LEFT + pw
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">prefix length (tokens)</text>"#,
        LEFT + pw / 2.0,
        H - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        metric.axis_label()
    );

    // Bands, then lines on top.
    for sr in series {
        if sr.points.len() < 2 {
            continue;
        }
        let mut poly = String::new();
        for p in &sr.points {
            let _ = write!(poly, "{:.2},{:.2} ", sx(p.checkpoint as f64), sy(p.ci_high));
        }
        for p in sr.points.iter().rev() {
            let _ = write!(poly, "{:.2},{:.2} ", sx(p.checkpoint as f64), sy(p.ci_low));
        }
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{}" fill-opacity="0.15" stroke="none"/>"#,
            poly.trim_end(),
            color(sr.strategy)
        );
    }
    for sr in series {
        let c = color(sr.strategy);
        let path: Vec<String> = sr
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.checkpoint as f64), sy(p.value)))
            .collect();
        if path.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
                path.join(" ")
            );
        }
        for p in &sr.points {
            let (px, py) = (sx(p.checkpoint as f64), sy(p.value));
            if sr.points.len() == 1 {
                // A lone point gets its interval drawn as an error bar.
                let _ = writeln!(
                    s,
                    r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="{c}"/>"#,
                    sy(p.ci_low),
                    sy(p.ci_high)
                );
            }
            let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{c}"/>"#);
        }
    }

    // Legend.
    for (i, sr) in series.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = W - RIGHT + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 22.0,
            color(sr.strategy),
            x + 28.0,
            y + 4.0,
            escape(&sr.strategy.to_string())
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes every plot plus `plots/series.csv`; returns paths relative to
/// `out_dir`.
pub fn emit_plots(
    rows: &[TrialRow],
    out_dir: &Path,
    opts: &PlotOptions,
    margins: bool,
) -> Result<Vec<String>> {
    if rows.is_empty() {
        return Err(Error::InvalidInput(
            "nothing to plot: no trial results".into(),
        ));
    }
    let kinds: BTreeSet<DatasetKind> = rows.iter().map(|r| r.dataset).collect();
    let mut written = Vec::new();
    let mut table = Vec::new();
    for kind in [DatasetKind::Pairs, DatasetKind::Regions] {
        if !kinds.contains(&kind) {
            continue;
        }
        let mut metrics = vec![Metric::Accuracy, Metric::BaselinedAccuracy];
        if margins && kind == DatasetKind::Pairs {
            metrics.push(Metric::Margin);
        }
        for metric in metrics {
            let lines = series(rows, kind, metric, opts)?;
            if lines.is_empty() {
                continue;
            }
            for sr in &lines {
                for p in &sr.points {
                    table.push(SeriesRow {
                        dataset: kind,
                        metric: metric.as_str().into(),
                        averaging: opts.averaging.to_string(),
                        strategy: sr.strategy.to_string(),
                        checkpoint: p.checkpoint,
                        value: p.value,
                        ci_low: p.ci_low,
                        ci_high: p.ci_high,
                        n_units: p.n_units,
                    });
                }
            }
            let title = format!(
                "{} {} ({}-averaged, {:.0}% bootstrap band)",
                kind.as_str(),
                metric.axis_label(),
                opts.averaging,
                opts.level * 100.0
            );
            let rel = format!("{PLOT_DIR}/{}_{}.svg", kind.as_str(), metric.as_str());
            write_atomic(
                &out_dir.join(&rel),
                render_svg(&title, metric, &lines).as_bytes(),
            )?;
            written.push(rel);
        }
    }
    write_atomic(&out_dir.join(SERIES_CSV), &csv_bytes(&table)?)?;
    written.push(SERIES_CSV.into());
    Ok(written)
}
