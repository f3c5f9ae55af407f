//! A deliberately small translation model with exact gradients.
//!
//! The model is a log-linear bag-of-source classifier: a parameter matrix
//! `theta` with one row per source token and one column per target token.
//! A source sentence is mean-pooled over its rows into one logit vector, and
//! every target token is scored by the same softmax:
//!
//! ```text
//! z_t = (1/|x|) * sum_i theta[x_i, t]
//! log P(y | x) = sum_j log softmax(z)[y_j]
//! ```
//!
//! Target length `|y|` counts the target tokens only — there is no end
//! symbol on this side. The model is tiny, trains in milliseconds, and its
//! log-likelihood gradient has a closed form, which makes it a faithful
//! desk-scale stand-in for a neural translation model everywhere a
//! fine-tune-and-compare experiment is needed:
//!
//! * [`nmt_domain_feature`] — per-target-token log-likelihood advantage of a
//!   domain-adapted model over the base model;
//! * [`multi_domain_feature`] — the same, adapted on several trusted seed
//!   corpora at once;
//! * [`taylor_check`] — verifies that after one ascent step of size
//!   `lambda`, the score difference is `lambda * <g(pair), g(seed)>` up to
//!   an `O(lambda^2)` remainder;
//! * [`ToyTranslationModel::perplexity`] — per-target-token perplexity.
//!
//! Unknown tokens map to index 0 of the corresponding vocabulary; vocabs
//! built from a corpus reserve a synthetic `<unk>` entry there.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SentencePair;
use crate::error::{Error, Result};

/// Reserved unknown-token entry for corpus-built vocabularies.
pub const UNK_TOKEN: &str = "<unk>";

const MODEL_VERSION: u32 = 1;

/// A token-to-index mapping. Index 0 doubles as the unknown-token slot.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Vocab {
    /// A vocabulary over exactly these tokens, in order. Unknown tokens will
    /// map to index 0, whatever that entry is.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab> {
        if tokens.is_empty() {
            return Err(Error::invalid("vocabulary must not be empty"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token '{t}'")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// A vocabulary with `<unk>` reserved at index 0 followed by the distinct
    /// tokens of `iter` in first-seen order.
    pub fn with_unk<'a>(iter: impl IntoIterator<Item = &'a str>) -> Vocab {
        let mut tokens = vec![UNK_TOKEN.to_owned()];
        let mut index = HashMap::new();
        index.insert(UNK_TOKEN.to_owned(), 0);
        for t in iter {
            if !index.contains_key(t) {
                index.insert(t.to_owned(), tokens.len() as u32);
                tokens.push(t.to_owned());
            }
        }
        Vocab { tokens, index }
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when the vocabulary has no entries (unreachable via constructors).
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The index for `token`, or 0 (the unknown slot) if absent.
    pub fn lookup(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(0)
    }

    /// Entries in index order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Dense gradient of the total log-likelihood with respect to `theta`,
/// with the same shape as the model it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl GradientVector {
    /// An all-zero gradient shaped like `model`'s parameters.
    pub fn zeros_like(model: &ToyTranslationModel) -> GradientVector {
        GradientVector {
            rows: model.src_vocab.len(),
            cols: model.tgt_vocab.len(),
            values: vec![0.0; model.src_vocab.len() * model.tgt_vocab.len()],
        }
    }

    /// Source-vocab rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Target-vocab columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Flat row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The entry for source row `s`, target column `t`.
    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.values[s * self.cols + t]
    }

    /// Reset to all zeros, keeping the allocation.
    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Euclidean inner product with a same-shaped gradient.
    pub fn dot(&self, other: &GradientVector) -> f64 {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "gradient shapes must match"
        );
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Euclidean norm.
    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// The bag-of-source log-linear translation model.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTranslationModel {
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    /// Row-major `|S| x |T|`, row per source token.
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    src_tokens: Vec<String>,
    tgt_tokens: Vec<String>,
    theta: Vec<f64>,
}

impl ToyTranslationModel {
    /// A zero-initialized model over the vocabulary of `pairs` (both sides
    /// get a reserved `<unk>` entry at index 0).
    pub fn from_pairs(pairs: &[SentencePair]) -> Result<ToyTranslationModel> {
        if pairs.is_empty() {
            return Err(Error::invalid("cannot build a model from no pairs"));
        }
        let src_vocab = Vocab::with_unk(
            pairs
                .iter()
                .flat_map(|p| p.source.iter().map(String::as_str)),
        );
        let tgt_vocab = Vocab::with_unk(
            pairs
                .iter()
                .flat_map(|p| p.target.iter().map(String::as_str)),
        );
        Ok(ToyTranslationModel {
            theta: vec![0.0; src_vocab.len() * tgt_vocab.len()],
            src_vocab,
            tgt_vocab,
        })
    }

    /// A model over explicit vocabularies and parameters (row-major
    /// `src x tgt`).
    pub fn with_vocabs(src: Vocab, tgt: Vocab, theta: Vec<f64>) -> Result<ToyTranslationModel> {
        if theta.len() != src.len() * tgt.len() {
            return Err(Error::invalid(format!(
                "theta has {} entries for a {}x{} model",
                theta.len(),
                src.len(),
                tgt.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "model parameters".into(),
            });
        }
        Ok(ToyTranslationModel {
            src_vocab: src,
            tgt_vocab: tgt,
            theta,
        })
    }

    /// Source vocabulary.
    pub fn src_vocab(&self) -> &Vocab {
        &self.src_vocab
    }

    /// Target vocabulary.
    pub fn tgt_vocab(&self) -> &Vocab {
        &self.tgt_vocab
    }

    /// Flat row-major parameters.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// True when both vocabularies match entry for entry.
    pub fn same_vocabs(&self, other: &ToyTranslationModel) -> bool {
        self.src_vocab == other.src_vocab && self.tgt_vocab == other.tgt_vocab
    }

    /// Mean-pooled logits for a source sentence.
    fn logits(&self, source: &[String], out: &mut Vec<f64>) {
        let cols = self.tgt_vocab.len();
        out.clear();
        out.resize(cols, 0.0);
        let scale = 1.0 / source.len() as f64;
        for tok in source {
            let row = self.src_vocab.lookup(tok) as usize * cols;
            let row = &self.theta[row..row + cols];
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                *o += v;
            }
        }
        for o in out.iter_mut() {
            *o *= scale;
        }
    }

    /// Total log-likelihood `log P(y | x)` of one pair.
    pub fn log_likelihood(&self, pair: &SentencePair) -> f64 {
        let mut z = Vec::new();
        self.logits(&pair.source, &mut z);
        let lse = log_sum_exp(&z);
        pair.target
            .iter()
            .map(|t| z[self.tgt_vocab.lookup(t) as usize] - lse)
            .sum()
    }

    /// Add `weight` times one pair's log-likelihood gradient into `grad`;
    /// returns the pair's log-likelihood.
    ///
    /// The per-pair gradient is supported on the rows of the pair's source
    /// tokens only:
    /// `d LL / d theta[s, t] = (m_s / |x|) * (c_t - |y| * p_t)`
    /// with `m_s` the source count of `s`, `c_t` the target count of `t`,
    /// and `p` the shared softmax.
    pub fn accumulate_gradient(
        &self,
        pair: &SentencePair,
        weight: f64,
        grad: &mut GradientVector,
        scratch: &mut GradScratch,
    ) -> f64 {
        let cols = self.tgt_vocab.len();
        assert_eq!(
            (grad.rows, grad.cols),
            (self.src_vocab.len(), cols),
            "gradient shape must match the model"
        );

        self.logits(&pair.source, &mut scratch.z);
        let lse = log_sum_exp(&scratch.z);

        // Shared row update u_t = (c_t - |y| p_t) / |x|, identical for every
        // source occurrence.
        let ylen = pair.target.len() as f64;
        scratch.u.clear();
        scratch
            .u
            .extend(scratch.z.iter().map(|&z| -ylen * (z - lse).exp()));
        let mut ll = 0.0;
        for t in &pair.target {
            let id = self.tgt_vocab.lookup(t) as usize;
            ll += scratch.z[id] - lse;
            scratch.u[id] += 1.0;
        }
        let scale = weight / pair.source.len() as f64;
        for tok in &pair.source {
            let row = self.src_vocab.lookup(tok) as usize * cols;
            let row = &mut grad.values[row..row + cols];
            for (g, &u) in row.iter_mut().zip(scratch.u.iter()) {
                *g += scale * u;
            }
        }
        ll
    }

    /// Summed log-likelihood gradient over `pairs` (no averaging).
    pub fn gradient(&self, pairs: &[SentencePair]) -> GradientVector {
        let mut grad = GradientVector::zeros_like(self);
        let mut scratch = GradScratch::default();
        for p in pairs {
            self.accumulate_gradient(p, 1.0, &mut grad, &mut scratch);
        }
        grad
    }

    /// `theta += scale * grad`, in place.
    pub fn apply_gradient(&mut self, grad: &GradientVector, scale: f64) {
        assert_eq!(
            (grad.rows, grad.cols),
            (self.src_vocab.len(), self.tgt_vocab.len()),
            "gradient shape must match the model"
        );
        for (t, &g) in self.theta.iter_mut().zip(grad.values.iter()) {
            *t += scale * g;
        }
    }

    /// Gradient-ascend on the *summed* log-likelihood of `seed` for `steps`
    /// full-batch steps of size `lr`. Returns the adapted model; `self` is
    /// untouched.
    pub fn finetune(&self, seed: &[SentencePair], lr: f64, steps: usize) -> ToyTranslationModel {
        let mut model = self.clone();
        for _ in 0..steps {
            let grad = model.gradient(seed);
            model.apply_gradient(&grad, lr);
        }
        model
    }

    /// Per-target-token perplexity over `pairs`:
    /// `exp(-sum LL / sum |y|)`. `pairs` must be non-empty.
    pub fn perplexity(&self, pairs: &[SentencePair]) -> f64 {
        assert!(!pairs.is_empty(), "perplexity over an empty set");
        let mut total_ll = 0.0;
        let mut total_tokens = 0usize;
        for p in pairs {
            total_ll += self.log_likelihood(p);
            total_tokens += p.target.len();
        }
        (-total_ll / total_tokens as f64).exp()
    }

    /// Write the model as canonical versioned JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let shown = path.as_ref().display().to_string();
        std::fs::write(path, self.to_json_bytes()).map_err(|e| Error::io(shown, e))
    }

    /// The canonical serialized form.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let file = ModelFile {
            version: MODEL_VERSION,
            src_tokens: self.src_vocab.tokens.clone(),
            tgt_tokens: self.tgt_vocab.tokens.clone(),
            theta: self.theta.clone(),
        };
        let mut bytes = serde_json::to_vec(&file).expect("model serialization cannot fail");
        bytes.push(b'\n');
        bytes
    }

    /// Load a model written by [`ToyTranslationModel::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<ToyTranslationModel> {
        let shown = path.as_ref().display().to_string();
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&shown, e))?;
        let file: ModelFile = serde_json::from_slice(&bytes).map_err(|e| Error::Json {
            path: shown.clone(),
            source: e,
        })?;
        if file.version != MODEL_VERSION {
            return Err(Error::Parse {
                path: shown,
                line: 1,
                message: format!(
                    "unsupported model version {} (expected {MODEL_VERSION})",
                    file.version
                ),
            });
        }
        let src = Vocab::from_tokens(file.src_tokens)?;
        let tgt = Vocab::from_tokens(file.tgt_tokens)?;
        ToyTranslationModel::with_vocabs(src, tgt, file.theta)
    }
}

/// Reusable buffers for gradient accumulation.
#[derive(Debug, Default)]
pub struct GradScratch {
    z: Vec<f64>,
    u: Vec<f64>,
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Per-target-token log-likelihood advantage of a domain-adapted model over
/// the base model on one pair:
/// `(log P(y|x; domain) - log P(y|x; base)) / |y|`.
///
/// Both models must share vocabularies (adapted models always do).
pub fn nmt_domain_feature(
    pair: &SentencePair,
    base: &ToyTranslationModel,
    domain: &ToyTranslationModel,
) -> Result<f64> {
    if !base.same_vocabs(domain) {
        return Err(Error::VocabMismatch {
            context: "domain feature requires models over the same vocabularies".into(),
        });
    }
    Ok((domain.log_likelihood(pair) - base.log_likelihood(pair)) / pair.target.len() as f64)
}

/// The multi-domain variant: adapt the base model on the concatenation of
/// several trusted seed corpora, then score the advantage. With a single
/// seed this reduces exactly to [`nmt_domain_feature`] over
/// [`ToyTranslationModel::finetune`].
pub fn multi_domain_feature(
    pair: &SentencePair,
    base: &ToyTranslationModel,
    seeds: &[&[SentencePair]],
    lr: f64,
    steps: usize,
) -> Result<f64> {
    let domain = multi_domain_model(base, seeds, lr, steps)?;
    nmt_domain_feature(pair, base, &domain)
}

/// Adapt `base` on the concatenation of `seeds` (for scoring many pairs
/// against one adapted model without re-tuning per pair).
pub fn multi_domain_model(
    base: &ToyTranslationModel,
    seeds: &[&[SentencePair]],
    lr: f64,
    steps: usize,
) -> Result<ToyTranslationModel> {
    if seeds.is_empty() || seeds.iter().any(|s| s.is_empty()) {
        return Err(Error::invalid(
            "multi-domain adaptation needs at least one non-empty seed corpus",
        ));
    }
    let concat: Vec<SentencePair> = seeds.iter().flat_map(|s| s.iter().cloned()).collect();
    Ok(base.finetune(&concat, lr, steps))
}

/// Both sides of the first-order score approximation for one pair.
#[derive(Debug, Clone, Copy)]
pub struct TaylorCheck {
    /// Exact score change: `log P(y|x; adapted) - log P(y|x; base)`.
    pub lhs: f64,
    /// First-order prediction: `lambda * <g(pair; base), g(seed; base)>`.
    pub rhs: f64,
    /// `|lhs - rhs|`.
    pub abs_err: f64,
}

/// Compare the exact score change after one ascent step of size `lambda` on
/// `seed` against its first-order approximation. The approximation error
/// shrinks as `O(lambda^2)`.
pub fn taylor_check(
    pair: &SentencePair,
    base: &ToyTranslationModel,
    seed: &[SentencePair],
    lambda: f64,
) -> TaylorCheck {
    let adapted = base.finetune(seed, lambda, 1);
    let lhs = adapted.log_likelihood(pair) - base.log_likelihood(pair);
    let rhs = lambda * base.gradient(std::slice::from_ref(pair)).dot(&base.gradient(seed));
    TaylorCheck {
        lhs,
        rhs,
        abs_err: (lhs - rhs).abs(),
    }
}
