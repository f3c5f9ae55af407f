//! Learned data-selection curricula for multi-domain parallel-corpus training.
//!
//! The library scores every sentence pair of a noisy parallel corpus with a
//! weighted combination of quality and domain features, converts the scores
//! to percentiles, and trains under a schedule that keeps only the current
//! top fraction of the data — a fraction that starts at the whole corpus and
//! decays toward the cleanest, most relevant core. The feature weights
//! themselves are learned by Bayesian optimization over short training
//! trials.
//!
//! Modules:
//!
//! * [`corpus`] — sentence pairs, per-pair feature vectors, weighted
//!   aggregation and percentile normalization;
//! * [`features`] — n-gram language-model and hashed-embedding features;
//! * [`translation`] — a tiny log-linear translation model with exact
//!   gradients, fine-tuning, and translation-quality domain features;
//! * [`curriculum`] — the decaying retained-fraction schedule, subset
//!   selection, training loops, and the selection-composition report;
//! * [`optimizer`] — Gaussian-process surrogate, expected improvement,
//!   Bayesian/random weight search, and validation mixing;
//! * [`synth`] — synthetic multi-domain corpus generator for experiments
//!   and tests;
//! * [`config`] — the experiment configuration file;
//! * [`pipeline`] — the command layer: score, normalize, tune, train,
//!   eval, report;
//! * [`rng`] — deterministic seed derivation for reproducible runs;
//! * [`error`] — one error type with a stable exit-code mapping.
//!
//! Each major capability has a runnable example:
//!
//! * `generate_corpus` — write a synthetic two-domain world plus a ready
//!   experiment config;
//! * `schedule_demo` — the retained-fraction decay step by step;
//! * `feature_scores` — score pairs with every feature kind;
//! * `taylor_check` — the second-order argument behind the
//!   translation-quality feature, measured numerically;
//! * `bayesopt_quadratic` — the weight search on an analytic objective;
//! * `curriculum_training` — curriculum vs uniform training on a noisy
//!   synthetic corpus;
//! * `dynamic_balance` — what the selection keeps as the cut rises;
//! * `full_pipeline` — every pipeline stage end to end in one process.

pub mod config;
pub mod corpus;
pub mod curriculum;
pub mod error;
pub mod features;
pub mod optimizer;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod translation;

pub use error::{Error, Result};
