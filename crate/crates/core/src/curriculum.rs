//! Decaying-selection curriculum: schedule, subset selection, and training.
//!
//! A schedule maps a training step `t` to a retained fraction `rho(t)`:
//! `1` through an optional warmup, then a half-life decay clamped at a
//! floor,
//!
//! ```text
//! rho(t) = max(floor, 0.5^((t - warmup) / halving))
//! ```
//!
//! At every step the trainer keeps only the `ceil(rho * n)` highest-scored
//! pairs (by the corpus percentiles) and samples mini-batches uniformly
//! from that shrinking subset — equivalently, a per-pair weight vector that
//! is `1/n(t)` on the selected pairs and `0` elsewhere. With `rho == 1`
//! the loop reproduces plain uniform training exactly, batch for batch.
//!
//! [`Trainer::run_loss_weighted`] is the softer baseline: no selection,
//! every sampled pair's gradient scaled by its min-max-normalized score.
//! [`dynamic_balance_report`] tabulates what the selection keeps — mean
//! aggregate score, per-feature means, optional quality ratings — as the
//! percentile cut rises.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ScoredCorpus;
use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::translation::{GradScratch, GradientVector, ToyTranslationModel};

/// The retained-fraction schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Steps (after warmup) over which the retained fraction halves.
    pub halving: f64,
    /// Lower clamp on the retained fraction, in `(0, 1]`.
    pub floor: f64,
    /// Steps during which everything is retained.
    pub warmup: u64,
    /// Total training steps.
    pub max_steps: u64,
}

impl Schedule {
    /// A validated schedule.
    pub fn new(halving: f64, floor: f64, warmup: u64, max_steps: u64) -> Result<Schedule> {
        if !(halving.is_finite() && halving > 0.0) {
            return Err(Error::invalid(format!(
                "halving must be a positive finite step count, got {halving}"
            )));
        }
        if !(floor.is_finite() && floor > 0.0 && floor <= 1.0) {
            return Err(Error::invalid(format!(
                "floor must lie in (0, 1], got {floor}"
            )));
        }
        Ok(Schedule {
            halving,
            floor,
            warmup,
            max_steps,
        })
    }

    /// The degenerate schedule that always retains everything: plain
    /// uniform training.
    pub fn constant(max_steps: u64) -> Schedule {
        Schedule {
            halving: 1.0,
            floor: 1.0,
            warmup: 0,
            max_steps,
        }
    }

    /// The schedule whose unclamped decay reaches exactly `floor` at step
    /// `at_step`, then stays there.
    pub fn reaching(floor: f64, at_step: u64, warmup: u64, max_steps: u64) -> Result<Schedule> {
        if !(floor.is_finite() && floor > 0.0 && floor < 1.0) {
            return Err(Error::invalid(format!(
                "a decaying schedule needs a floor in (0, 1), got {floor}"
            )));
        }
        if at_step <= warmup {
            return Err(Error::invalid(format!(
                "the floor must be reached after warmup ({at_step} <= {warmup})"
            )));
        }
        let halving =
            (at_step - warmup) as f64 * std::f64::consts::LN_2 / -floor.ln();
        Schedule::new(halving, floor, warmup, max_steps)
    }

    /// Retained fraction at `step`.
    pub fn rho(&self, step: u64) -> f64 {
        if step < self.warmup {
            return 1.0;
        }
        let decay = 0.5f64.powf((step - self.warmup) as f64 / self.halving);
        decay.max(self.floor)
    }
}

/// How many pairs a fraction `rho` retains out of `n`: `ceil(rho * n)`,
/// never below one or above `n`.
pub fn retained_count(n: usize, rho: f64) -> usize {
    ((rho * n as f64).ceil() as usize).clamp(1, n)
}

/// The selection at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// The step the selection was computed for.
    pub step: u64,
    /// Retained fraction at that step.
    pub rho: f64,
    /// Number of selected pairs.
    pub n_selected: usize,
    /// Percentile threshold: a pair is selected iff its percentile is at
    /// least this. Equals `(n - n_selected) / n` exactly.
    pub threshold: f64,
    /// Selected pair positions, ascending. When everything is selected this
    /// is `0..n` in order, which is what makes the constant schedule
    /// reproduce plain uniform training stream-for-stream.
    pub positions: Vec<usize>,
}

/// Select the top-scored subset for `step`. The corpus must be scored and
/// percentile-normalized.
pub fn select(corpus: &ScoredCorpus, schedule: &Schedule, step: u64) -> Result<Selection> {
    let ranked = ranked_or_err(corpus)?;
    let n = corpus.len();
    let rho = schedule.rho(step);
    let m = retained_count(n, rho);
    let mut positions: Vec<usize> = ranked[n - m..].to_vec();
    positions.sort_unstable();
    Ok(Selection {
        step,
        rho,
        n_selected: m,
        threshold: (n - m) as f64 / n as f64,
        positions,
    })
}

/// The per-pair sampling weights at `step`: `1 / n_selected` on the
/// selected pairs, `0` elsewhere — a probability mass function over pair
/// positions.
pub fn selection_weights(
    corpus: &ScoredCorpus,
    schedule: &Schedule,
    step: u64,
) -> Result<Vec<f64>> {
    let sel = select(corpus, schedule, step)?;
    let mut w = vec![0.0; corpus.len()];
    let share = 1.0 / sel.n_selected as f64;
    for &p in &sel.positions {
        w[p] = share;
    }
    Ok(w)
}

/// Min-max normalize raw scores into `[0, 1]` gradient weights; if every
/// score is equal the weights are all `1`.
pub fn minmax_weights(f: &[f64]) -> Vec<f64> {
    let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![1.0; f.len()];
    }
    let span = hi - lo;
    f.iter().map(|&v| (v - lo) / span).collect()
}

/// One uniform-with-replacement mini-batch of positions from the selected
/// subset.
pub fn sample_batch(selected: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..batch_size)
        .map(|_| selected[rng.random_range(0..selected.len())])
        .collect()
}

/// Per-step training log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Training step.
    pub step: u64,
    /// Retained fraction at this step.
    pub rho: f64,
    /// Selected-subset size at this step.
    pub n_selected: usize,
    /// Mean aggregate score of the sampled batch.
    pub batch_mean_f: f64,
    /// Negative of the objective the step ascends (mean per-pair batch
    /// log-likelihood; the weighted mean for loss-weighted runs), measured
    /// before the update.
    pub train_loss: f64,
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The trained model.
    pub model: ToyTranslationModel,
    /// One record per step.
    pub log: Vec<StepRecord>,
}

/// Mini-batch gradient-ascent trainer.
#[derive(Debug, Clone, Copy)]
pub struct Trainer {
    /// Step size applied to the mean batch gradient.
    pub learning_rate: f64,
    /// Pairs sampled per step.
    pub batch_size: usize,
}

impl Trainer {
    fn check(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }

    /// Train a copy of `base` under the decaying-selection curriculum.
    ///
    /// The random stream is derived from `seed` with the fixed tag
    /// `"train"`; for a given (model, corpus, schedule, trainer, seed) the
    /// result is bit-reproducible. Each step draws exactly `batch_size`
    /// positions from the selected subset, then applies the mean batch
    /// gradient.
    pub fn run_curriculum(
        &self,
        base: &ToyTranslationModel,
        corpus: &ScoredCorpus,
        schedule: &Schedule,
        seed: u64,
    ) -> Result<TrainOutcome> {
        self.check()?;
        let ranked = ranked_or_err(corpus)?;
        let f = corpus.f().expect("ranked implies aggregated scores");
        let n = corpus.len();
        let mut rng = seeded_rng(seed, "train");
        let mut model = base.clone();
        let mut grad = GradientVector::zeros_like(&model);
        let mut scratch = GradScratch::default();
        let mut log = Vec::with_capacity(schedule.max_steps as usize);

        // The subset only shrinks as rho decays; recompute it when its size
        // changes.
        let mut selected: Vec<usize> = Vec::new();
        let mut current_m = 0usize;
        for step in 0..schedule.max_steps {
            let rho = schedule.rho(step);
            let m = retained_count(n, rho);
            if m != current_m {
                selected = ranked[n - m..].to_vec();
                selected.sort_unstable();
                current_m = m;
            }

            grad.clear();
            let mut batch_ll = 0.0;
            let mut batch_f = 0.0;
            for _ in 0..self.batch_size {
                let pos = selected[rng.random_range(0..m)];
                batch_ll += model.accumulate_gradient(corpus.pair(pos), 1.0, &mut grad, &mut scratch);
                batch_f += f[pos];
            }
            model.apply_gradient(&grad, self.learning_rate / self.batch_size as f64);
            log.push(StepRecord {
                step,
                rho,
                n_selected: m,
                batch_mean_f: batch_f / self.batch_size as f64,
                train_loss: -batch_ll / self.batch_size as f64,
            });
        }
        Ok(TrainOutcome { model, log })
    }

    /// The no-selection baseline: sample uniformly from the whole corpus
    /// for `steps` steps and scale each pair's gradient by its
    /// min-max-normalized score. With all scores equal this reproduces
    /// plain uniform training exactly.
    pub fn run_loss_weighted(
        &self,
        base: &ToyTranslationModel,
        corpus: &ScoredCorpus,
        steps: u64,
        seed: u64,
    ) -> Result<TrainOutcome> {
        self.check()?;
        let f = corpus
            .f()
            .ok_or_else(|| Error::InvalidState("scores not computed; aggregate first".into()))?;
        let weights = minmax_weights(f);
        let n = corpus.len();
        let mut rng = seeded_rng(seed, "train");
        let mut model = base.clone();
        let mut grad = GradientVector::zeros_like(&model);
        let mut scratch = GradScratch::default();
        let mut log = Vec::with_capacity(steps as usize);
        for step in 0..steps {
            grad.clear();
            let mut batch_obj = 0.0;
            let mut batch_f = 0.0;
            for _ in 0..self.batch_size {
                let pos = rng.random_range(0..n);
                let ll =
                    model.accumulate_gradient(corpus.pair(pos), weights[pos], &mut grad, &mut scratch);
                batch_obj += weights[pos] * ll;
                batch_f += f[pos];
            }
            model.apply_gradient(&grad, self.learning_rate / self.batch_size as f64);
            log.push(StepRecord {
                step,
                rho: 1.0,
                n_selected: n,
                batch_mean_f: batch_f / self.batch_size as f64,
                train_loss: -batch_obj / self.batch_size as f64,
            });
        }
        Ok(TrainOutcome { model, log })
    }
}

/// Composition of the pairs at or above one percentile threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    /// Percentile cut the row describes; a pair belongs when its
    /// percentile is `>= threshold`.
    pub threshold: f64,
    /// How many pairs clear the cut.
    pub count: usize,
    /// Mean aggregate score over those pairs; absent when none do.
    pub mean_f: Option<f64>,
    /// Mean raw value of every feature over those pairs (empty when the
    /// cut selects nothing). Reported for inspection; only `mean_f` is
    /// guaranteed monotone in the threshold.
    pub feature_means: BTreeMap<String, f64>,
    /// Mean quality rating over those pairs, when ratings are given.
    pub mean_rating: Option<f64>,
}

/// Tabulate what the selection keeps as the percentile cut rises: for each
/// threshold, the mean aggregate score, per-feature means, and optionally
/// the mean of an external per-pair quality rating. The corpus must be
/// scored and normalized. Because pairs at or above a cut are exactly the
/// top of the ascending score order, `mean_f` never decreases from row to
/// row when thresholds are given in increasing order.
pub fn dynamic_balance_report(
    corpus: &ScoredCorpus,
    thresholds: &[f64],
    ratings: Option<&[f64]>,
) -> Result<Vec<BalanceRow>> {
    let f = corpus
        .f()
        .ok_or_else(|| Error::InvalidState("scores not computed; aggregate first".into()))?;
    let percentile = corpus
        .percentile()
        .ok_or_else(|| Error::InvalidState("corpus not percentile-normalized; score first".into()))?;
    if let Some(r) = ratings {
        if r.len() != corpus.len() {
            return Err(Error::invalid(format!(
                "{} ratings for {} pairs",
                r.len(),
                corpus.len()
            )));
        }
    }
    for &tau in thresholds {
        if !tau.is_finite() {
            return Err(Error::invalid(format!("non-finite threshold {tau}")));
        }
    }
    let names = corpus.feature_names();
    let mut rows = Vec::with_capacity(thresholds.len());
    for &tau in thresholds {
        let members: Vec<usize> = (0..corpus.len())
            .filter(|&pos| percentile[pos] >= tau)
            .collect();
        let count = members.len();
        if count == 0 {
            rows.push(BalanceRow {
                threshold: tau,
                count: 0,
                mean_f: None,
                feature_means: BTreeMap::new(),
                mean_rating: None,
            });
            continue;
        }
        let mean_over = |values: &[f64]| -> f64 {
            members.iter().map(|&pos| values[pos]).sum::<f64>() / count as f64
        };
        let feature_means = names
            .iter()
            .map(|name| {
                let col = corpus.feature_column(name).expect("name comes from corpus");
                (name.clone(), mean_over(col))
            })
            .collect();
        rows.push(BalanceRow {
            threshold: tau,
            count,
            mean_f: Some(mean_over(f)),
            feature_means,
            mean_rating: ratings.map(mean_over),
        });
    }
    Ok(rows)
}

fn ranked_or_err(corpus: &ScoredCorpus) -> Result<&[usize]> {
    corpus
        .ranked()
        .ok_or_else(|| Error::InvalidState("corpus not percentile-normalized; score first".into()))
}
