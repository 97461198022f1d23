use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{BackendKind, DatasetKind, ExperimentConfig, RawConfig};
use super::manifest::{fields_digest, file_digest, RunManifest};
use super::output::{
    read_csv, read_jsonl, regression_rows, regression_text, write_csv, write_jsonl, AggregateRow,
    MarginRow, RegressionRow, SummaryCsvRow, TrialRow,
};
use super::plot;
use crate::context::{
    build_trials, derive_seed, Domain, PrefixStrategy, SuitePool, TargetRef, TokenCounter,
    TrialPlan, TrialSpec,
};
use crate::dataset::{
    load_corpus, load_pair_suite, load_region_suite, ConditionedItem, CorpusSource, Dataset,
    MinimalPair,
};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, item_accuracy, pair_accuracy, summarize, Averaging, Outcome, TrialResult,
};
use crate::scorer::{
    region_surprisals, score_continuation, sequence_loglik, RemoteBackend, ScoreCache,
    ScoreRequest, ScoringBackend, TrigramBackend,
};
use crate::similarity::{load_annotations, AnnotationTable};
use crate::stats::{bootstrap_ci, fit_logistic, RegressionSpec, RegressionTrial};

pub const TRIALS_FILE: &str = "trials.jsonl";
/// Bumped whenever the results.jsonl record layout changes.
const RESULTS_FORMAT: u32 = 2;
pub const RESULTS_FILE: &str = "results.jsonl";
pub const TRIAL_RESULTS_CSV: &str = "trial_results.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const MARGINS_CSV: &str = "margins.csv";
pub const REGRESSION_CSV: &str = "regression.csv";
pub const REGRESSION_TXT: &str = "regression.txt";

/// Loaded datasets, corpus and annotations plus a digest of every file read.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub dataset: Dataset,
    pub corpus: Option<CorpusSource>,
    pub annotations: Option<AnnotationTable>,
    pub digests: BTreeMap<String, String>,
}

impl Inputs {
    pub fn kinds(&self) -> Vec<DatasetKind> {
        let mut v = Vec::new();
        if !self.dataset.pair_suites.is_empty() {
            v.push(DatasetKind::Pairs);
        }
        if !self.dataset.region_suites.is_empty() {
            v.push(DatasetKind::Regions);
        }
        v
    }

    pub fn pools(&self, kind: DatasetKind) -> Vec<SuitePool> {
        match kind {
            DatasetKind::Pairs => self
                .dataset
                .pair_suites
                .iter()
                .map(SuitePool::from_pairs)
                .collect(),
            DatasetKind::Regions => self
                .dataset
                .region_suites
                .iter()
                .map(SuitePool::from_regions)
                .collect(),
        }
    }
}

/// Files named directly, plus every file with extension `ext` inside named
/// directories, sorted.
pub fn expand_paths(paths: &[PathBuf], ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == ext))
                .collect();
            if found.is_empty() {
                return Err(Error::dataset(
                    p,
                    format!("directory holds no .{ext} files"),
                ));
            }
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(Error::dataset(p, "no such file or directory"));
        }
    }
    Ok(out)
}

fn record_digest(digests: &mut BTreeMap<String, String>, path: &Path) -> Result<()> {
    digests.insert(path.display().to_string(), file_digest(path)?);
    Ok(())
}

pub fn load_inputs(cfg: &ExperimentConfig) -> Result<Inputs> {
    let mut digests = BTreeMap::new();
    let mut dataset = Dataset::default();
    for p in expand_paths(&cfg.pairs, "jsonl")? {
        dataset.pair_suites.push(load_pair_suite(&p)?);
        record_digest(&mut digests, &p)?;
    }
    for p in expand_paths(&cfg.regions, "json")? {
        dataset.region_suites.push(load_region_suite(&p)?);
        record_digest(&mut digests, &p)?;
    }
    dataset.validate_unique_suites()?;
    let corpus = match &cfg.corpus {
        Some(p) => {
            record_digest(&mut digests, p)?;
            Some(load_corpus(p)?)
        }
        None => None,
    };
    if corpus.is_none() && cfg.uses_control() {
        return Err(Error::Config(
            "the control strategy needs [data] corpus".into(),
        ));
    }
    let annotations = match &cfg.annotations {
        Some(p) => {
            record_digest(&mut digests, p)?;
            let table = load_annotations(p)?;
            table.validate_against(&dataset)?;
            Some(table)
        }
        None => None,
    };
    if let Some(p) = &cfg.backend.training {
        record_digest(&mut digests, p)?;
    }
    Ok(Inputs {
        dataset,
        corpus,
        annotations,
        digests,
    })
}

/// Every sentence in the dataset, both members of pairs and every condition.
fn dataset_text(dataset: &Dataset) -> Vec<String> {
    crate::similarity::dataset_sentences(dataset)
        .into_iter()
        .map(|s| s.text)
        .collect()
}

pub fn open_backend(cfg: &ExperimentConfig, inputs: &Inputs) -> Result<Arc<dyn ScoringBackend>> {
    match cfg.backend.kind {
        BackendKind::Remote => {
            let url = cfg
                .backend
                .url
                .as_deref()
                .expect("checked when resolving the config");
            Ok(Arc::new(RemoteBackend::connect(
                url,
                &cfg.model_id,
                cfg.backend.max_concurrency,
            )?))
        }
        BackendKind::Reference => {
            let sentences = match (&cfg.backend.training, &inputs.corpus) {
                (Some(p), _) => load_corpus(p)?.sentences,
                (None, Some(c)) => c.sentences.clone(),
                (None, None) => dataset_text(&inputs.dataset),
            };
            let mut b = TrigramBackend::from_sentences(&sentences, cfg.backend.alpha)?;
            if let Some(limit) = cfg.backend.context_limit {
                b = b.with_context_limit(limit);
            }
            Ok(Arc::new(b))
        }
    }
}

/// What a trial's target resolves to.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Pair {
        pair: &'a MinimalPair,
        phenomenon: &'a str,
    },
    Item {
        item: &'a ConditionedItem,
        phenomenon: &'a str,
    },
}

impl Target<'_> {
    pub fn kind(&self) -> DatasetKind {
        match self {
            Target::Pair { .. } => DatasetKind::Pairs,
            Target::Item { .. } => DatasetKind::Regions,
        }
    }
}

pub struct TargetIndex<'a> {
    map: HashMap<TargetRef, Target<'a>>,
}

impl<'a> TargetIndex<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        let mut map = HashMap::new();
        for s in &dataset.pair_suites {
            for p in &s.pairs {
                map.insert(
                    TargetRef::Pair {
                        suite_id: s.suite_id.clone(),
                        pair_id: p.id.clone(),
                    },
                    Target::Pair {
                        pair: p,
                        phenomenon: &s.phenomenon,
                    },
                );
            }
        }
        for s in &dataset.region_suites {
            for item in &s.items {
                map.insert(
                    TargetRef::Item {
                        suite_id: s.suite_id.clone(),
                        item_id: item.item_id,
                    },
                    Target::Item {
                        item,
                        phenomenon: &s.phenomenon,
                    },
                );
            }
        }
        TargetIndex { map }
    }

    pub fn get(&self, t: &TargetRef) -> Result<Target<'a>> {
        self.map.get(t).copied().ok_or_else(|| {
            Error::InvalidInput(format!("trial target {} is not in the dataset", t.key()))
        })
    }
}

/// A scored trial tagged with the benchmark it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrial {
    pub dataset: DatasetKind,
    pub result: TrialResult,
}

/// Scores both members of a pair, or every condition of an item, under the
/// trial's prefix.
pub fn score_trial(
    spec: &TrialSpec,
    index: &TargetIndex,
    backend: &dyn ScoringBackend,
    cache: Option<&ScoreCache>,
    model_id: &str,
) -> Result<ScoredTrial> {
    let target = index.get(&spec.target)?;
    let prefix = spec.prefix.conditioning_text();
    let (phenomenon, outcome, correct) = match target {
        Target::Pair { pair, phenomenon } => {
            let mut ll = [0.0; 2];
            for (slot, text) in ll.iter_mut().zip([&pair.acceptable, &pair.unacceptable]) {
                let req = ScoreRequest::new(model_id, prefix.clone(), text.clone());
                *slot = sequence_loglik(&score_continuation(&req, backend, cache)?);
            }
            let correct = pair_accuracy(ll[0], ll[1])? == 1;
            (
                phenomenon,
                Outcome::Pair {
                    loglik_acceptable: ll[0],
                    loglik_unacceptable: ll[1],
                },
                correct,
            )
        }
        Target::Item { item, phenomenon } => {
            let mut surprisals = BTreeMap::new();
            for (name, cond) in &item.conditions {
                let text = cond.regions.text();
                let req = ScoreRequest::new(model_id, prefix.clone(), text.clone());
                let scored = score_continuation(&req, backend, cache)?;
                surprisals.insert(
                    name.clone(),
                    region_surprisals(&scored, &cond.regions, &text)?,
                );
            }
            let correct = item_accuracy(item, &surprisals)? == 1;
            (phenomenon, Outcome::Item { surprisals }, correct)
        }
    };
    Ok(ScoredTrial {
        dataset: target.kind(),
        result: TrialResult {
            trial_id: spec.id.clone(),
            suite_id: spec.target.suite_id().to_string(),
            phenomenon: phenomenon.to_string(),
            target: spec.target.key(),
            strategy: spec.strategy,
            source_suite: spec.source_suite.clone(),
            checkpoint: spec.prefix.checkpoint,
            prefix_tokens: spec.prefix.token_length,
            outcome,
            correct,
        },
    })
}

/// Scores trials on a bounded pool of workers. Results come back in trial
/// order whatever the pool size. On failure the error of the earliest
/// failing trial is returned.
pub fn score_all(
    specs: &[TrialSpec],
    index: &TargetIndex,
    backend: &dyn ScoringBackend,
    cache: Option<&ScoreCache>,
    model_id: &str,
    workers: usize,
) -> Result<Vec<ScoredTrial>> {
    let n = specs.len();
    let workers = workers.clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<ScoredTrial>)>();
    let mut slots: Vec<Option<ScoredTrial>> = vec![None; n];
    let mut first_error: Option<(usize, Error)> = None;

    thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, failed) = (&next, &failed);
            scope.spawn(move || loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = score_trial(&specs[i], index, backend, cache, model_id);
                if r.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                if tx.send((i, r)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut done = 0usize;
        for (i, r) in rx {
            match r {
                Ok(v) => {
                    slots[i] = Some(v);
                    done += 1;
                    if done % 500 == 0 {
                        log::info!("scored {done}/{n} trials");
                    }
                }
                Err(e) => {
                    if first_error.as_ref().map_or(true, |(j, _)| i < *j) {
                        first_error = Some((i, e));
                    }
                }
            }
        }
    });

    if let Some((i, e)) = first_error {
        log::error!("trial {} failed", specs[i].id);
        return Err(e);
    }
    Ok(slots
        .into_iter()
        .map(|s| s.expect("every trial scored"))
        .collect())
}

/// Trials for every target of every suite, pair suites first.
pub fn build_all_trials(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    counter: &dyn TokenCounter,
) -> Result<Vec<TrialSpec>> {
    let plan = TrialPlan {
        strategies: cfg.strategies.clone(),
        grid: cfg.grid.clone(),
        seed: cfg.seed,
        exclude_scope: cfg.exclude_scope,
    };
    let mut out = Vec::new();
    for kind in inputs.kinds() {
        let pools = inputs.pools(kind);
        for target in &pools {
            out.extend(build_trials(
                target,
                &pools,
                inputs.corpus.as_ref(),
                &plan,
                counter,
            )?);
        }
    }
    Ok(out)
}

/// Trials usable by the regression: prefixed, non-control, non-empty prefix.
pub fn regression_trials(results: &[&TrialResult]) -> Vec<RegressionTrial> {
    results
        .iter()
        .filter_map(|r| {
            let s = r.strategy?;
            (s.domain() != Domain::Control && r.prefix_tokens > 0 && r.source_suite.is_none()).then(
                || RegressionTrial {
                    correct: r.correct,
                    prefix_tokens: r.prefix_tokens,
                    polarity: s.polarity(),
                    domain: s.domain(),
                    suite_id: r.suite_id.clone(),
                },
            )
        })
        .collect()
}

/// Counts tokens with the scoring backend.
pub(crate) struct BackendCounter<'a>(pub &'a dyn ScoringBackend);

impl TokenCounter for BackendCounter<'_> {
    fn count_tokens(&self, text: &str) -> Result<usize> {
        self.0.count_tokens(text)
    }
}

fn strategy_label(s: Option<PrefixStrategy>) -> String {
    s.map_or_else(|| "baseline".to_string(), |s| s.to_string())
}

/// The experiment driver. Each stage method reruns only when its inputs or
/// outputs changed since the last completed run.
pub struct Runner {
    pub config: ExperimentConfig,
    pub inputs: Inputs,
    pub backend: Arc<dyn ScoringBackend>,
    cache: ScoreCache,
    manifest: RunManifest,
}

impl Runner {
    pub fn new(raw: &RawConfig) -> Result<Self> {
        let config = raw.resolve()?;
        Self::with_config(config, raw.snapshot())
    }

    pub fn with_config(
        config: ExperimentConfig,
        snapshot: BTreeMap<String, String>,
    ) -> Result<Self> {
        let inputs = load_inputs(&config)?;
        let backend = open_backend(&config, &inputs)?;
        Self::with_backend(config, snapshot, inputs, backend)
    }

    pub fn with_backend(
        config: ExperimentConfig,
        snapshot: BTreeMap<String, String>,
        inputs: Inputs,
        backend: Arc<dyn ScoringBackend>,
    ) -> Result<Self> {
        std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
        let cache = ScoreCache::open(&config.cache_dir)?;
        let mut manifest = RunManifest::load(&config.out_dir)?.unwrap_or_default();
        manifest.config = snapshot;
        manifest.datasets = inputs.digests.clone();
        manifest.model_id = config.model_id.clone();
        let info = backend.info();
        manifest.results_digest = results_digest(&config, &inputs, &info.backend_id)?;
        manifest.backend = Some(info);
        manifest.save(&config.out_dir)?;
        Ok(Runner {
            config,
            inputs,
            backend,
            cache,
            manifest,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn cache(&self) -> &ScoreCache {
        &self.cache
    }

    fn backend_id(&self) -> String {
        self.backend.info().backend_id
    }

    pub(crate) fn workers(&self) -> usize {
        self.config
            .backend
            .max_concurrency
            .min(self.backend.info().max_concurrency)
            .max(1)
    }

    fn out_digest(&self, rel: &str) -> Result<String> {
        file_digest(&self.out_dir().join(rel))
    }

    pub(crate) fn complete(
        &mut self,
        stage: &str,
        digest: String,
        outputs: &[String],
        started: Instant,
    ) -> Result<()> {
        let dir = self.config.out_dir.clone();
        self.manifest.complete(
            &dir,
            stage,
            digest,
            outputs,
            started.elapsed().as_secs_f64(),
        )
    }

    pub(crate) fn is_complete(&self, stage: &str, digest: &str) -> bool {
        let done = self.manifest.is_complete(self.out_dir(), stage, digest);
        if done {
            log::info!("{stage}: up to date");
        }
        done
    }

    fn trials_digest(&self) -> String {
        let mut fields: Vec<(&str, String)> = vec![
            ("strategies", format!("{:?}", self.config.strategies)),
            ("grid", format!("{:?}", self.config.grid)),
            ("seed", self.config.seed.to_string()),
            ("exclude_scope", format!("{:?}", self.config.exclude_scope)),
            ("backend", self.backend_id()),
        ];
        for (k, v) in &self.inputs.digests {
            fields.push((k.as_str(), v.clone()));
        }
        fields_digest(fields)
    }

    /// Builds (or reloads) the trial manifest.
    pub fn trials(&mut self) -> Result<Vec<TrialSpec>> {
        let digest = self.trials_digest();
        let path = self.out_dir().join(TRIALS_FILE);
        if self.is_complete("trials", &digest) {
            return read_jsonl(&path);
        }
        let started = Instant::now();
        let trials = build_all_trials(
            &self.config,
            &self.inputs,
            &BackendCounter(self.backend.as_ref()),
        )?;
        write_jsonl(&path, &trials)?;
        log::info!("trials: {} built", trials.len());
        self.complete("trials", digest, &[TRIALS_FILE.into()], started)?;
        Ok(trials)
    }

    pub fn score(&mut self) -> Result<Vec<ScoredTrial>> {
        let trials = self.trials()?;
        let digest = fields_digest([
            ("trials", self.out_digest(TRIALS_FILE)?),
            ("format", RESULTS_FORMAT.to_string()),
            ("backend", self.backend_id()),
            ("model", self.config.model_id.clone()),
        ]);
        let path = self.out_dir().join(RESULTS_FILE);
        if self.is_complete("score", &digest) {
            return read_jsonl(&path);
        }
        let started = Instant::now();
        let index = TargetIndex::new(&self.inputs.dataset);
        let scored = score_all(
            &trials,
            &index,
            self.backend.as_ref(),
            Some(&self.cache),
            &self.config.model_id,
            self.workers(),
        )?;
        log::info!(
            "score: {} trials, cache hits {} misses {}",
            scored.len(),
            self.cache.hits(),
            self.cache.misses()
        );
        write_jsonl(&path, &scored)?;
        let rows: Vec<TrialRow> = scored
            .iter()
            .map(|s| TrialRow::new(s.dataset, &s.result))
            .collect();
        write_csv(&self.out_dir().join(TRIAL_RESULTS_CSV), &rows)?;
        self.complete(
            "score",
            digest,
            &[RESULTS_FILE.into(), TRIAL_RESULTS_CSV.into()],
            started,
        )?;
        Ok(scored)
    }

    pub fn analyze(&mut self) -> Result<()> {
        let scored = self.score()?;
        let a = &self.config.analysis;
        let digest = fields_digest([
            ("results", self.out_digest(RESULTS_FILE)?),
            ("regression", a.regression.to_string()),
            ("ridge_lambda", a.ridge_lambda.to_string()),
            ("margins", a.margins.to_string()),
            ("bootstrap", a.bootstrap.to_string()),
            ("confidence", a.confidence.to_string()),
            ("seed", self.config.seed.to_string()),
        ]);
        if self.is_complete("analyze", &digest) {
            return Ok(());
        }
        let started = Instant::now();
        let dir = self.out_dir().to_path_buf();
        let mut outputs = vec![AGGREGATE_CSV.to_string(), SUMMARY_CSV.to_string()];

        let mut aggregate_rows = Vec::new();
        let mut summary_rows = Vec::new();
        let mut margin_rows = Vec::new();
        let mut regression = Vec::new();
        let mut regression_report = String::new();

        for kind in self.inputs.kinds() {
            let results: Vec<TrialResult> = scored
                .iter()
                .filter(|s| s.dataset == kind)
                .map(|s| s.result.clone())
                .collect();
            if results.is_empty() {
                continue;
            }
            let cells = aggregate(&results)?;
            aggregate_rows.extend(cells.iter().map(AggregateRow::from));
            for averaging in [Averaging::Macro, Averaging::Micro] {
                summary_rows.extend(
                    summarize(&cells, averaging)
                        .iter()
                        .map(|r| SummaryCsvRow::new(kind, r)),
                );
            }

            if a.margins && kind == DatasetKind::Pairs {
                margin_rows.extend(margin_table(
                    &results,
                    a.bootstrap,
                    a.confidence,
                    self.config.seed,
                )?);
            }

            if a.regression {
                let refs: Vec<&TrialResult> = results.iter().collect();
                let data = regression_trials(&refs);
                let spec = RegressionSpec {
                    group_by_suite: true,
                    ridge_lambda: a.ridge_lambda,
                };
                if !regression_report.is_empty() {
                    regression_report.push('\n');
                }
                if data.is_empty() {
                    regression_report.push_str(&format!(
                        "dataset: {}\nno in-domain or out-of-domain prefixed trials; regression skipped\n",
                        kind.as_str()
                    ));
                    continue;
                }
                match fit_logistic(&spec, &data) {
                    Ok(fit) => {
                        regression.extend(regression_rows(kind, &fit));
                        regression_report.push_str(&regression_text(kind, &fit));
                    }
                    Err(e) => {
                        regression_report
                            .push_str(&format!("dataset: {}\nfit failed: {e}\n", kind.as_str()));
                    }
                }
            }
        }

        write_csv(&dir.join(AGGREGATE_CSV), &aggregate_rows)?;
        write_csv(&dir.join(SUMMARY_CSV), &summary_rows)?;
        if a.margins {
            write_csv(&dir.join(MARGINS_CSV), &margin_rows)?;
            outputs.push(MARGINS_CSV.into());
        }
        if a.regression {
            write_csv::<RegressionRow>(&dir.join(REGRESSION_CSV), &regression)?;
            super::manifest::write_atomic(&dir.join(REGRESSION_TXT), regression_report.as_bytes())?;
            outputs.push(REGRESSION_CSV.into());
            outputs.push(REGRESSION_TXT.into());
        }
        self.complete("analyze", digest, &outputs, started)
    }

    /// Renders plots from `trial_results.csv`.
    pub fn plot(&mut self) -> Result<Vec<PathBuf>> {
        self.score()?;
        let a = &self.config.analysis;
        let digest = fields_digest([
            ("trial_results", self.out_digest(TRIAL_RESULTS_CSV)?),
            ("averaging", a.averaging.to_string()),
            ("bootstrap", a.bootstrap.to_string()),
            ("confidence", a.confidence.to_string()),
            ("margins", a.margins.to_string()),
            ("seed", self.config.seed.to_string()),
        ]);
        if self.is_complete("plot", &digest) {
            return Ok(self.stage_outputs("plot"));
        }
        let started = Instant::now();
        let rows: Vec<TrialRow> = read_csv(&self.out_dir().join(TRIAL_RESULTS_CSV))?;
        let opts = plot::PlotOptions {
            averaging: a.averaging,
            resamples: a.bootstrap,
            level: a.confidence,
            seed: self.config.seed,
        };
        let outputs = plot::emit_plots(&rows, self.out_dir(), &opts, a.margins)?;
        self.complete("plot", digest, &outputs, started)?;
        Ok(self.stage_outputs("plot"))
    }

    fn stage_outputs(&self, stage: &str) -> Vec<PathBuf> {
        self.manifest
            .stages
            .get(stage)
            .map(|r| r.outputs.keys().map(|k| self.out_dir().join(k)).collect())
            .unwrap_or_default()
    }

    /// Every default stage, in order.
    pub fn run(&mut self) -> Result<&RunManifest> {
        self.analyze()?;
        self.plot()?;
        if self.config.analysis.similarity {
            self.similarity()?;
        }
        Ok(&self.manifest)
    }
}

fn results_digest(cfg: &ExperimentConfig, inputs: &Inputs, backend_id: &str) -> Result<String> {
    let mut v = serde_json::to_value(cfg)?;
    if let Some(obj) = v.as_object_mut() {
        // Where outputs go and how fast they are produced do not change them.
        obj.remove("out_dir");
        obj.remove("cache_dir");
        obj.remove("pairs");
        obj.remove("regions");
        obj.remove("corpus");
        obj.remove("annotations");
        if let Some(b) = obj.get_mut("backend").and_then(|b| b.as_object_mut()) {
            b.remove("max_concurrency");
            b.remove("training");
        }
    }
    let mut fields = vec![
        ("config", v.to_string()),
        ("backend", backend_id.to_string()),
    ];
    // Paths vary between machines; contents do not.
    fields.extend(inputs.digests.values().map(|d| ("input", d.clone())));
    Ok(fields_digest(fields))
}

/// Mean margin per (suite, strategy, checkpoint) with a bootstrap interval
/// over trials.
pub fn margin_table(
    results: &[TrialResult],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<MarginRow>> {
    let mut groups: BTreeMap<(String, Option<PrefixStrategy>, usize), (String, Vec<f64>)> =
        BTreeMap::new();
    for r in results {
        if let Some(m) = r.margin() {
            groups
                .entry((r.suite_id.clone(), r.strategy, r.checkpoint))
                .or_insert_with(|| (r.phenomenon.clone(), Vec::new()))
                .1
                .push(m);
        }
    }
    groups
        .into_iter()
        .map(|((suite, strategy, checkpoint), (phenomenon, margins))| {
            let label = strategy_label(strategy);
            let s = derive_seed(seed, &["margin", &suite, &label, &checkpoint.to_string()]);
            let (lo, hi) = bootstrap_ci(&margins, resamples, level, s)?;
            let (strategy_domain, strategy_polarity) = super::output::strategy_columns(strategy);
            Ok(MarginRow {
                suite,
                phenomenon,
                strategy_domain,
                strategy_polarity,
                checkpoint,
                n: margins.len(),
                mean_margin: crate::stats::bootstrap::shifted_mean(&margins),
                ci_low: lo,
                ci_high: hi,
            })
        })
        .collect()
}

/// Checks config, datasets and annotations without touching a backend.
pub fn validate(raw: &RawConfig) -> Result<String> {
    let cfg = raw.resolve()?;
    let inputs = load_inputs(&cfg)?;
    let pairs: usize = inputs
        .dataset
        .pair_suites
        .iter()
        .map(|s| s.pairs.len())
        .sum();
    let items: usize = inputs
        .dataset
        .region_suites
        .iter()
        .map(|s| s.items.len())
        .sum();
    Ok(format!(
        "{} pair suites ({pairs} pairs), {} region suites ({items} items), corpus: {}, annotations: {}",
        inputs.dataset.pair_suites.len(),
        inputs.dataset.region_suites.len(),
        inputs
            .corpus
            .as_ref()
            .map_or("none".to_string(), |c| format!("{} sentences", c.sentences.len())),
        inputs
            .annotations
            .as_ref()
            .map_or("none".to_string(), |a| format!("{} sentences", a.len())),
    ))
}
