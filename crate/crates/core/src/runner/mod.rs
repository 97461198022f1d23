//! Experiment pipeline: config, stages, outputs and recipes.
//!
//! Stages run in order `trials -> score -> analyze -> plot`, with
//! `similarity` and `cross_prime` as optional extras. Each stage records its
//! input digest and output digests in `manifest.json`; a rerun skips every
//! stage whose record still matches, so an interrupted run resumes where it
//! stopped and scores already in the cache are never recomputed.

pub mod config;
pub mod manifest;
pub mod output;
mod pipeline;
pub mod plot;
pub mod recipes;

pub use config::{BackendKind, DatasetKind, ExperimentConfig, RawConfig};
pub use manifest::RunManifest;
pub use pipeline::{
    build_all_trials, expand_paths, load_inputs, margin_table, open_backend, regression_trials,
    score_all, score_trial, validate, Inputs, Runner, ScoredTrial, Target, TargetIndex,
    AGGREGATE_CSV, MARGINS_CSV, REGRESSION_CSV, REGRESSION_TXT, RESULTS_FILE, SUMMARY_CSV,
    TRIALS_FILE, TRIAL_RESULTS_CSV,
};
pub use recipes::{CrossPrimeCell, CROSS_PRIME_DIR, SIMILARITY_DIR};
