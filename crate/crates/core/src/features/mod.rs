//! Per-pair relevance features.
//!
//! Desk-scale stand-ins for the usual data-selection signals:
//!
//! * [`ngram`] — interpolated n-gram language models with additive smoothing,
//!   domain adaptation by probability interpolation, and the source-side
//!   cross-entropy-difference feature they induce;
//! * [`embed`] — hashed character-n-gram sentence vectors and the
//!   source/target cosine-similarity feature.
//!
//! Every feature is a plain `f64` per sentence pair, computed independently
//! of any other feature, and deterministic for fixed inputs.

pub mod embed;
pub mod ngram;

pub use embed::{embedding_similarity_feature, HashedSentVec, DEFAULT_BUCKETS};
pub use ngram::{
    avg_logprob, nlm_domain_feature, read_monolingual, train_ngram_lm, InterpolatedLm, NGramLm,
    SmoothingConfig, TokenModel,
};
