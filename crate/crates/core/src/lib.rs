//! Measure how prepended context changes a causal language model's
//! minimal-pair acceptability judgements.
//!
//! The crate covers the whole pipeline: loading benchmark suites
//! ([`dataset`]), building prefixed trials ([`context`]), scoring them
//! through a pluggable backend ([`scorer`]), judging them ([`metrics`],
//! [`prediction`]), and the downstream analyses ([`stats`], [`similarity`]).
//! [`runner`] ties the stages together behind a config file.

pub mod context;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod prediction;
pub mod runner;
pub mod scorer;
pub mod similarity;
pub mod stats;

pub use error::{Error, ErrorClass, Result};
