//! Interpolated n-gram language models and the domain feature they induce.
//!
//! An [`NGramLm`] of order `o` interpolates add-k-smoothed estimates of all
//! orders `1..=o` with fixed weights:
//!
//! ```text
//! P(w | c) = sum_k lambda_k * (count_k(c_k, w) + add_k) / (total_k(c_k) + add_k * E)
//! ```
//!
//! where `c_k` is the last `k-1` symbols of the context and `E` is the event
//! space size — every training token, the end-of-sentence symbol, and a
//! single unknown-word event. Sentences are padded with `o-1` start symbols
//! and scored through one end symbol, and the end symbol counts toward the
//! per-token normalization of [`avg_logprob`].
//!
//! Domain adaptation is probability interpolation ([`InterpolatedLm`]):
//! `P_domain-adapted = mu * P_domain-only + (1-mu) * P_base`, scored through
//! the shared [`TokenModel`] trait so base and adapted models plug into the
//! same scoring code. The induced per-pair feature is the per-token log-score
//! difference [`nlm_domain_feature`], computed on the source side only.
//!
//! The literal symbols `<s>`, `</s>` are reserved for sentence padding; a
//! corpus that uses them as ordinary words will conflate them with padding.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved start-of-sentence padding symbol.
pub const START_SYMBOL: &str = "<s>";
/// Reserved end-of-sentence event symbol.
pub const END_SYMBOL: &str = "</s>";

const MODEL_VERSION: u32 = 1;

/// Additive smoothing strength plus per-order interpolation weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Pseudo-count added to every event at every order; must be ≥ 0.
    pub add_k: f64,
    /// Interpolation weight per order (index 0 = unigram); must be
    /// non-negative and sum to 1.
    pub lambdas: Vec<f64>,
}

impl SmoothingConfig {
    /// Uniform interpolation over `order` levels with the given add-k.
    pub fn uniform(order: usize, add_k: f64) -> SmoothingConfig {
        SmoothingConfig {
            add_k,
            lambdas: vec![1.0 / order as f64; order],
        }
    }

    fn validate(&self, order: usize) -> Result<()> {
        if !(self.add_k.is_finite() && self.add_k >= 0.0) {
            return Err(Error::invalid("add_k must be finite and non-negative"));
        }
        if self.lambdas.len() != order {
            return Err(Error::invalid(format!(
                "{} interpolation weights for order {order}",
                self.lambdas.len()
            )));
        }
        if self.lambdas.iter().any(|&l| !(l.is_finite() && l >= 0.0)) {
            return Err(Error::invalid("interpolation weights must be non-negative"));
        }
        let sum: f64 = self.lambdas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "interpolation weights sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Anything that can assign `P(token | context)` over token strings.
///
/// `context` holds the most recent history first-to-last; implementations
/// consult at most [`TokenModel::context_window`] trailing symbols and accept
/// the reserved padding symbol [`START_SYMBOL`] as history and
/// [`END_SYMBOL`] as a scoreable event.
pub trait TokenModel {
    /// Maximum number of trailing history symbols consulted.
    fn context_window(&self) -> usize;

    /// `P(token | context)`, in `[0, 1]`.
    fn token_prob(&self, context: &[&str], token: &str) -> f64;
}

/// Per-context continuation counts for one interpolation level.
#[derive(Debug, Clone, PartialEq)]
struct ContextCounts {
    total: u64,
    events: BTreeMap<u32, u64>,
}

/// An interpolated add-k n-gram language model.
///
/// Counts live in ordered maps so that training is deterministic and
/// serialization is canonical: training twice on the same corpus produces
/// byte-identical model files.
#[derive(Debug, Clone)]
pub struct NGramLm {
    order: usize,
    smoothing: SmoothingConfig,
    /// Token string per id, in first-seen order.
    tokens: Vec<String>,
    /// Reverse lookup; rebuilt on load, never serialized.
    index: HashMap<String, u32>,
    /// `levels[k]` holds contexts of length `k` (level 0 = unigram).
    levels: Vec<BTreeMap<Vec<u32>, ContextCounts>>,
}

impl PartialEq for NGramLm {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.smoothing == other.smoothing
            && self.tokens == other.tokens
            && self.levels == other.levels
    }
}

/// Train an [`NGramLm`] on whitespace-tokenized sentences.
pub fn train_ngram_lm(
    sentences: &[Vec<String>],
    order: usize,
    smoothing: SmoothingConfig,
) -> Result<NGramLm> {
    if order == 0 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    smoothing.validate(order)?;
    if sentences.is_empty() {
        return Err(Error::invalid("cannot train a language model on no sentences"));
    }

    let mut lm = NGramLm {
        order,
        smoothing,
        tokens: Vec::new(),
        index: HashMap::new(),
        levels: vec![BTreeMap::new(); order],
    };

    let mut ids: Vec<u32> = Vec::new();
    for sentence in sentences {
        ids.clear();
        ids.extend(sentence.iter().map(|t| lm.intern(t)));
        lm.count_sentence(&ids);
    }
    Ok(lm)
}

/// Read a monolingual text file: one whitespace-tokenized sentence per line,
/// blank lines skipped.
pub fn read_monolingual(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(&shown, e))?;
    let mut sentences = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(&shown, e))?;
        let tokens: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if !tokens.is_empty() {
            sentences.push(tokens);
        }
    }
    if sentences.is_empty() {
        return Err(Error::EmptyInput { path: shown });
    }
    Ok(sentences)
}

#[derive(Serialize, Deserialize)]
struct LmFile {
    version: u32,
    order: usize,
    smoothing: SmoothingConfig,
    tokens: Vec<String>,
    /// `levels[k]` as `(context ids, [(event id, count), ...])` entries in
    /// ascending context order.
    levels: Vec<Vec<(Vec<u32>, Vec<(u32, u64)>)>>,
}

impl NGramLm {
    /// Model order (maximum n-gram length).
    pub fn order(&self) -> usize {
        self.order
    }

    /// Smoothing configuration.
    pub fn smoothing(&self) -> &SmoothingConfig {
        &self.smoothing
    }

    /// Number of distinct training tokens (excluding the reserved symbols).
    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    /// Size of the event space: training tokens, the end symbol, and the
    /// unknown-word event.
    pub fn event_space(&self) -> usize {
        self.tokens.len() + 2
    }

    fn end_id(&self) -> u32 {
        self.tokens.len() as u32
    }

    fn start_id(&self) -> u32 {
        self.tokens.len() as u32 + 1
    }

    fn unk_id(&self) -> u32 {
        self.tokens.len() as u32 + 2
    }

    fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    /// Map a token string to its event id (unknown tokens share one event).
    fn event_of(&self, token: &str) -> u32 {
        if token == END_SYMBOL {
            return self.end_id();
        }
        match self.index.get(token) {
            Some(&id) => id,
            None => self.unk_id(),
        }
    }

    /// Map a history symbol to its context id.
    fn context_id_of(&self, token: &str) -> u32 {
        if token == START_SYMBOL {
            return self.start_id();
        }
        if token == END_SYMBOL {
            return self.end_id();
        }
        match self.index.get(token) {
            Some(&id) => id,
            None => self.unk_id(),
        }
    }

    fn count_sentence(&mut self, ids: &[u32]) {
        let start = self.start_id();
        let end = self.end_id();
        // History window: order-1 start pads, then the sentence itself.
        let mut history: Vec<u32> = vec![start; self.order - 1];
        history.extend_from_slice(ids);

        for pos in 0..=ids.len() {
            let event = if pos < ids.len() { ids[pos] } else { end };
            // `history[..order-1+pos]` ends right before this event.
            let hist_end = self.order - 1 + pos;
            for k in 0..self.order {
                let ctx = &history[hist_end - k..hist_end];
                let slot = self.levels[k]
                    .entry(ctx.to_vec())
                    .or_insert_with(|| ContextCounts {
                        total: 0,
                        events: BTreeMap::new(),
                    });
                slot.total += 1;
                *slot.events.entry(event).or_insert(0) += 1;
            }
        }
    }

    /// `P(event | context ids)` at a single interpolation level.
    fn level_prob(&self, k: usize, ctx: &[u32], event: u32) -> f64 {
        let e = self.event_space() as f64;
        let add_k = self.smoothing.add_k;
        match self.levels[k].get(ctx) {
            Some(slot) => {
                let cnt = slot.events.get(&event).copied().unwrap_or(0) as f64;
                (cnt + add_k) / (slot.total as f64 + add_k * e)
            }
            None => {
                if add_k > 0.0 {
                    1.0 / e
                } else {
                    // Unsmoothed and unseen: no mass at this level.
                    0.0
                }
            }
        }
    }

    /// Write the model as canonical versioned JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let shown = path.as_ref().display().to_string();
        let bytes = self.to_json_bytes();
        std::fs::write(path, bytes).map_err(|e| Error::io(shown, e))
    }

    /// The canonical serialized form (used by save and byte-stability tests).
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let file = LmFile {
            version: MODEL_VERSION,
            order: self.order,
            smoothing: self.smoothing.clone(),
            tokens: self.tokens.clone(),
            levels: self
                .levels
                .iter()
                .map(|level| {
                    level
                        .iter()
                        .map(|(ctx, counts)| {
                            (
                                ctx.clone(),
                                counts.events.iter().map(|(&e, &c)| (e, c)).collect(),
                            )
                        })
                        .collect()
                })
                .collect(),
        };
        let mut bytes = serde_json::to_vec(&file).expect("LM serialization cannot fail");
        bytes.push(b'\n');
        bytes
    }

    /// Load a model written by [`NGramLm::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<NGramLm> {
        let shown = path.as_ref().display().to_string();
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&shown, e))?;
        let file: LmFile = serde_json::from_slice(&bytes).map_err(|e| Error::Json {
            path: shown.clone(),
            source: e,
        })?;
        if file.version != MODEL_VERSION {
            return Err(Error::Parse {
                path: shown.clone(),
                line: 1,
                message: format!(
                    "unsupported language-model version {} (expected {MODEL_VERSION})",
                    file.version
                ),
            });
        }
        if file.order == 0 || file.levels.len() != file.order {
            return Err(Error::Parse {
                path: shown,
                line: 1,
                message: "inconsistent order and level count".into(),
            });
        }
        file.smoothing.validate(file.order)?;
        let index = file
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let levels = file
            .levels
            .into_iter()
            .map(|level| {
                level
                    .into_iter()
                    .map(|(ctx, events)| {
                        let events: BTreeMap<u32, u64> = events.into_iter().collect();
                        let total = events.values().sum();
                        (ctx, ContextCounts { total, events })
                    })
                    .collect()
            })
            .collect();
        Ok(NGramLm {
            order: file.order,
            smoothing: file.smoothing,
            tokens: file.tokens,
            index,
            levels,
        })
    }
}

impl TokenModel for NGramLm {
    fn context_window(&self) -> usize {
        self.order - 1
    }

    fn token_prob(&self, context: &[&str], token: &str) -> f64 {
        let event = self.event_of(token);
        // Ids for the trailing window, left-padded with starts if the caller
        // supplied a shorter history than the model's window.
        let window = self.context_window();
        let mut ctx_ids: Vec<u32> = Vec::with_capacity(window);
        for _ in context.len()..window {
            ctx_ids.push(self.start_id());
        }
        let from = context.len().saturating_sub(window);
        for s in &context[from..] {
            ctx_ids.push(self.context_id_of(s));
        }

        let mut p = 0.0;
        for k in 0..self.order {
            let ctx = &ctx_ids[ctx_ids.len() - k..];
            p += self.smoothing.lambdas[k] * self.level_prob(k, ctx, event);
        }
        p
    }
}

/// Probability interpolation of a domain-only model with a base model:
/// `P = mu * P_domain + (1 - mu) * P_base`.
///
/// This is how a domain-adapted model is built here — the stand-in for
/// adapting a trained model's distribution toward in-domain text.
#[derive(Debug, Clone, Copy)]
pub struct InterpolatedLm<'a> {
    base: &'a NGramLm,
    domain: &'a NGramLm,
    mu: f64,
}

impl<'a> InterpolatedLm<'a> {
    /// Default interpolation weight toward the domain-only model.
    pub const DEFAULT_MU: f64 = 0.5;

    /// Build the adapted model; `mu` must lie in `[0, 1]`.
    pub fn new(base: &'a NGramLm, domain: &'a NGramLm, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && (0.0..=1.0).contains(&mu)) {
            return Err(Error::invalid(format!(
                "interpolation weight mu={mu} outside [0, 1]"
            )));
        }
        Ok(InterpolatedLm { base, domain, mu })
    }
}

impl TokenModel for InterpolatedLm<'_> {
    fn context_window(&self) -> usize {
        self.base.context_window().max(self.domain.context_window())
    }

    fn token_prob(&self, context: &[&str], token: &str) -> f64 {
        self.mu * self.domain.token_prob(context, token)
            + (1.0 - self.mu) * self.base.token_prob(context, token)
    }
}

/// Per-token average log-probability of a sentence, scored through one end
/// symbol. The normalizer `|x|` counts the end symbol, so a sentence of `m`
/// tokens is averaged over `m + 1` events. Always ≤ 0.
pub fn avg_logprob<M: TokenModel + ?Sized>(model: &M, tokens: &[String]) -> f64 {
    let window = model.context_window();
    // Padded history as string slices: window starts, then the sentence.
    let mut history: Vec<&str> = Vec::with_capacity(window + tokens.len());
    history.extend(std::iter::repeat(START_SYMBOL).take(window));
    history.extend(tokens.iter().map(String::as_str));

    let mut total = 0.0;
    for pos in 0..=tokens.len() {
        let event = if pos < tokens.len() {
            tokens[pos].as_str()
        } else {
            END_SYMBOL
        };
        let hist_end = window + pos;
        let ctx = &history[hist_end - window..hist_end];
        total += model.token_prob(ctx, event).ln();
    }
    total / (tokens.len() + 1) as f64
}

/// Source-side domain feature: per-token log-probability advantage of the
/// domain-adapted model over the base model on sentence `x`.
pub fn nlm_domain_feature<B, D>(x: &[String], base: &B, domain: &D) -> f64
where
    B: TokenModel + ?Sized,
    D: TokenModel + ?Sized,
{
    avg_logprob(domain, x) - avg_logprob(base, x)
}
