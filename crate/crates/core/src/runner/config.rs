//! Experiment configuration.
//!
//! ```ini
//! [data]
//! pairs = fixtures/pairs
//! regions = fixtures/regions
//! corpus = fixtures/control.txt
//! annotations = fixtures/pairs.deps.tsv
//!
//! [model]
//! id = trigram
//!
//! [backend]
//! kind = reference
//! alpha = 0.1
//! max_concurrency = 4
//!
//! [trials]
//! strategies = in_domain:acceptable, in_domain:unacceptable, control
//! grid = 0, 50, 100
//! seed = 7
//!
//! [output]
//! dir = runs/demo
//! ```
//!
//! Relative paths resolve against the config file's directory. Unknown
//! sections and keys are rejected so typos do not silently fall back to
//! defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use serde::{Deserialize, Serialize};

use crate::context::{ExcludeScope, LengthGrid, Polarity, PrefixStrategy};
use crate::error::{Error, Result};
use crate::metrics::Averaging;
use crate::similarity::{OverlapMode, SimilarityKind};

const KNOWN: &[(&str, &[&str])] = &[
    ("data", &["pairs", "regions", "corpus", "annotations"]),
    ("model", &["id"]),
    (
        "backend",
        &[
            "kind",
            "url",
            "max_concurrency",
            "alpha",
            "training",
            "context_limit",
        ],
    ),
    (
        "trials",
        &["strategies", "grid", "budget_cap", "seed", "exclude_scope"],
    ),
    (
        "analysis",
        &[
            "regression",
            "ridge_lambda",
            "margins",
            "similarity",
            "similarity_kinds",
            "overlap",
            "similarity_sample",
            "averaging",
            "bootstrap",
            "confidence",
        ],
    ),
    ("cross_prime", &["dataset", "polarity", "max_sentences"]),
    ("output", &["dir", "cache"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Reference,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub url: Option<String>,
    pub max_concurrency: usize,
    /// Add-alpha smoothing for the reference trigram model.
    pub alpha: f64,
    /// Text the reference model is estimated from; defaults to the corpus.
    pub training: Option<PathBuf>,
    pub context_limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Pairs,
    Regions,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Pairs => "pairs",
            DatasetKind::Regions => "regions",
        }
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairs" => Ok(DatasetKind::Pairs),
            "regions" => Ok(DatasetKind::Regions),
            _ => Err(Error::Config(format!(
                "unknown dataset kind {s:?} (expected pairs or regions)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub regression: bool,
    pub ridge_lambda: f64,
    pub margins: bool,
    pub similarity: bool,
    pub similarity_kinds: Vec<SimilarityKind>,
    pub overlap: OverlapMode,
    pub similarity_sample: usize,
    pub averaging: Averaging,
    pub bootstrap: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPrimeConfig {
    pub dataset: DatasetKind,
    pub polarity: Polarity,
    /// Upper bound on prefix sentences per trial; `None` takes every
    /// sentence the source suite has.
    pub max_sentences: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub pairs: Vec<PathBuf>,
    pub regions: Vec<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub model_id: String,
    pub backend: BackendConfig,
    pub strategies: Vec<PrefixStrategy>,
    pub grid: LengthGrid,
    pub seed: u64,
    pub exclude_scope: ExcludeScope,
    pub analysis: AnalysisConfig,
    pub cross_prime: CrossPrimeConfig,
    pub out_dir: PathBuf,
    pub cache_dir: PathBuf,
}

/// A parsed config file plus command-line overrides, before interpretation.
#[derive(Debug, Clone)]
pub struct RawConfig {
    ini: Ini,
    base_dir: PathBuf,
}

impl RawConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(RawConfig {
            ini,
            base_dir: base_dir.into(),
        })
    }

    /// Sets `section.key`; a later value wins over the file.
    pub fn set(&mut self, dotted: &str, value: &str) -> Result<()> {
        let (section, key) = dotted.split_once('.').ok_or_else(|| {
            Error::Config(format!("override {dotted:?} must look like section.key"))
        })?;
        self.ini.with_section(Some(section)).set(key, value);
        Ok(())
    }

    /// Overrides a path-valued key. Paths given on the command line are
    /// relative to the working directory, not the config file.
    pub fn set_path(&mut self, dotted: &str, value: &Path) -> Result<()> {
        let abs = if value.is_absolute() {
            value.to_path_buf()
        } else {
            std::env::current_dir()
                .map_err(|e| Error::Config(format!("cannot resolve {}: {e}", value.display())))?
                .join(value)
        };
        self.set(dotted, &abs.to_string_lossy())
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.ini
            .section(Some(section))
            .and_then(|s| s.get(key))
            .map(str::trim)
            .filter(|v| !v.is_empty())
    }

    fn parsed<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::Config(format!("[{section}] {key} = {v:?}: {e}"))),
        }
    }

    fn path(&self, section: &str, key: &str) -> Option<PathBuf> {
        self.get(section, key).map(|v| self.base_dir.join(v))
    }

    fn paths(&self, section: &str, key: &str) -> Vec<PathBuf> {
        self.get(section, key)
            .map(|v| list(v).map(|p| self.base_dir.join(p)).collect())
            .unwrap_or_default()
    }

    fn check_known(&self) -> Result<()> {
        for (section, props) in self.ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::Config(format!(
                        "key {k:?} appears before any section"
                    )));
                }
                continue;
            };
            let keys = KNOWN
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, k)| *k)
                .ok_or_else(|| Error::Config(format!("unknown section [{section}]")))?;
            for (k, _) in props.iter() {
                if !keys.contains(&k) {
                    return Err(Error::Config(format!("unknown key {k:?} in [{section}]")));
                }
            }
        }
        Ok(())
    }

    /// Values as written, for the run manifest.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for (section, props) in self.ini.iter() {
            for (k, v) in props.iter() {
                out.insert(format!("{}.{k}", section.unwrap_or("")), v.to_string());
            }
        }
        out
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        self.check_known()?;
        let pairs = self.paths("data", "pairs");
        let regions = self.paths("data", "regions");
        if pairs.is_empty() && regions.is_empty() {
            return Err(Error::Config("[data] needs pairs or regions".into()));
        }

        let kind = match self.get("backend", "kind").unwrap_or("reference") {
            "reference" => BackendKind::Reference,
            "remote" => BackendKind::Remote,
            other => return Err(Error::Config(format!("unknown backend kind {other:?}"))),
        };
        let backend = BackendConfig {
            kind,
            url: self.get("backend", "url").map(str::to_string),
            max_concurrency: self.parsed("backend", "max_concurrency", 1usize)?,
            alpha: self.parsed("backend", "alpha", 0.1f64)?,
            training: self.path("backend", "training"),
            context_limit: self
                .get("backend", "context_limit")
                .map(|_| self.parsed("backend", "context_limit", 0usize))
                .transpose()?,
        };
        if backend.max_concurrency == 0 {
            return Err(Error::Config(
                "[backend] max_concurrency must be at least 1".into(),
            ));
        }
        if kind == BackendKind::Remote && backend.url.is_none() {
            return Err(Error::Config(
                "a remote backend needs [backend] url or --backend-url".into(),
            ));
        }
        if !(backend.alpha > 0.0) {
            return Err(Error::Config("[backend] alpha must be positive".into()));
        }

        let strategies = match self.get("trials", "strategies") {
            None => ALL_STRATEGIES
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<PrefixStrategy>>>()?,
            Some(v) => list(v)
                .map(|s| {
                    s.parse::<PrefixStrategy>()
                        .map_err(|e| Error::Config(e.to_string()))
                })
                .collect::<Result<_>>()?,
        };
        if strategies.is_empty() {
            return Err(Error::Config(
                "[trials] strategies must name at least one strategy".into(),
            ));
        }
        let default_grid = LengthGrid::default();
        let cap = self.parsed("trials", "budget_cap", default_grid.budget_cap())?;
        let grid = match self.get("trials", "grid") {
            None => LengthGrid::new(default_grid.checkpoints().to_vec(), cap),
            Some(v) => list(v)
                .map(|c| {
                    c.parse::<usize>()
                        .map_err(|e| Error::Config(format!("[trials] grid entry {c:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()
                .and_then(|g| LengthGrid::new(g, cap)),
        }
        .map_err(|e| Error::Config(e.to_string()))?;
        let seed = self
            .get("trials", "seed")
            .ok_or_else(|| {
                Error::Config("a seed is required: set [trials] seed or pass --seed".into())
            })?
            .parse::<u64>()
            .map_err(|e| Error::Config(format!("[trials] seed: {e}")))?;
        let exclude_scope = self
            .parsed("trials", "exclude_scope", ExcludeScope::Suite)
            .map_err(|e| Error::Config(e.to_string()))?;

        let analysis = AnalysisConfig {
            regression: self.parsed("analysis", "regression", true)?,
            ridge_lambda: self.parsed("analysis", "ridge_lambda", 1.0f64)?,
            margins: self.parsed("analysis", "margins", true)?,
            similarity: self.parsed("analysis", "similarity", false)?,
            similarity_kinds: match self.get("analysis", "similarity_kinds") {
                None => vec![SimilarityKind::Token, SimilarityKind::Dependency],
                Some(v) => list(v).map(str::parse).collect::<Result<_>>()?,
            },
            overlap: self.parsed("analysis", "overlap", OverlapMode::Multiset)?,
            similarity_sample: self.parsed("analysis", "similarity_sample", 10_000usize)?,
            averaging: self
                .parsed("analysis", "averaging", Averaging::Macro)
                .map_err(|e| Error::Config(e.to_string()))?,
            bootstrap: self.parsed("analysis", "bootstrap", 1000usize)?,
            confidence: self.parsed("analysis", "confidence", 0.95f64)?,
        };
        if !(analysis.ridge_lambda >= 0.0) {
            return Err(Error::Config("[analysis] ridge_lambda must be >= 0".into()));
        }
        if analysis.bootstrap < crate::stats::bootstrap::MIN_RESAMPLES {
            return Err(Error::Config(format!(
                "[analysis] bootstrap must be at least {}",
                crate::stats::bootstrap::MIN_RESAMPLES
            )));
        }
        if !(analysis.confidence > 0.0 && analysis.confidence < 1.0) {
            return Err(Error::Config(
                "[analysis] confidence must be in (0, 1)".into(),
            ));
        }
        if analysis.similarity_sample == 0 {
            return Err(Error::Config(
                "[analysis] similarity_sample must be at least 1".into(),
            ));
        }

        let cross_prime = CrossPrimeConfig {
            dataset: self.parsed("cross_prime", "dataset", DatasetKind::Regions)?,
            polarity: match self.get("cross_prime", "polarity").unwrap_or("acceptable") {
                "acceptable" => Polarity::Acceptable,
                "unacceptable" => Polarity::Unacceptable,
                other => return Err(Error::Config(format!("[cross_prime] polarity {other:?}"))),
            },
            max_sentences: match self.parsed("cross_prime", "max_sentences", 0usize)? {
                0 => None,
                n => Some(n),
            },
        };

        let out_dir = self.path("output", "dir").ok_or_else(|| {
            Error::Config("an output directory is required: set [output] dir or pass --out".into())
        })?;
        let cache_dir = self
            .path("output", "cache")
            .unwrap_or_else(|| out_dir.join("cache"));

        Ok(ExperimentConfig {
            pairs,
            regions,
            corpus: self.path("data", "corpus"),
            annotations: self.path("data", "annotations"),
            model_id: self.get("model", "id").unwrap_or("trigram").to_string(),
            backend,
            strategies,
            grid,
            seed,
            exclude_scope,
            analysis,
            cross_prime,
            out_dir,
            cache_dir,
        })
    }
}

pub const ALL_STRATEGIES: [&str; 5] = [
    "in_domain:acceptable",
    "in_domain:unacceptable",
    "out_of_domain:acceptable",
    "out_of_domain:unacceptable",
    "control",
];

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        RawConfig::load(path)?.resolve()
    }

    pub fn uses_control(&self) -> bool {
        self.strategies.contains(&PrefixStrategy::CONTROL)
    }
}
