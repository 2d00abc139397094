//! Weight-decay forgetting analysis for optimizer runs, plus the tooling for
//! controlled benchmark-contamination experiments.
//!
//! - [`schedule`] / [`config`]: learning-rate schedules, run configs, presets,
//!   Chinchilla token accounting.
//! - [`ledger`]: cumulative weight-decay products, forgetting curves and
//!   times, decile composition of the final weights.
//! - [`sim`]: instrumented AdamW / SGD simulators that check the weight
//!   decomposition exactly, the orthogonal-gradient forgetting experiment, and
//!   a bigram-model contamination demo.
//! - [`dedup`]: near-duplicate question filtering.
//! - [`contamination`]: contamination plans, token-stream injection, position
//!   profiles, synthetic corpora.
//! - [`stats`]: bootstrap confidence intervals and accuracy-gap reports.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod contamination;
pub mod dedup;
pub mod error;
pub mod io;
pub mod ledger;
pub mod schedule;
pub mod stats;
pub mod svg;
pub mod sim;

pub use config::{chinchilla_account, load_run_config, ChinchillaAccount, RunConfig};
pub use error::{Error, Result};
pub use ledger::{
    build_prefix, composition_report, exact_forgetting_time, forgetting_curve, forgetting_time_bound,
    CompositionReport, DecayCurve, DecayPrefix,
};
pub use schedule::{ScheduleKind, ScheduleSpec};
