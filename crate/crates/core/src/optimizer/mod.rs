//! Feature-weight search: Bayesian optimization over short training trials.
//!
//! The search space is a per-feature box (by default the unit box). Each
//! trial scores the corpus with a candidate weight vector, trains under the
//! decaying-selection curriculum for a short budget, and reports
//! `p = -perplexity` on a mixed-domain validation set, so larger is better.
//! A Gaussian-process surrogate (see [`gp`]) guides the search:
//!
//! * the first trials sample the box uniformly at random;
//! * the middle trials maximize expected improvement;
//! * the final trials exploit the posterior mean.
//!
//! Every random stream is derived from the experiment seed and the trial
//! index, so a run resumed from a saved trial log continues bit-for-bit
//! identically to one that never stopped.

pub mod gp;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ScoredCorpus, SentencePair, WeightVector};
use crate::curriculum::{Schedule, Trainer};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};
use crate::translation::ToyTranslationModel;

pub use gp::{ei, Acquisition, GpSurrogate, Posterior};

/// A per-feature search box, canonically ordered by feature name.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    entries: Vec<(String, (f64, f64))>,
}

impl Bounds {
    /// A validated box; entries are sorted by name.
    pub fn new(mut entries: Vec<(String, (f64, f64))>) -> Result<Bounds> {
        if entries.is_empty() {
            return Err(Error::invalid("the search box needs at least one feature"));
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!(
                    "duplicate feature '{}' in the search box",
                    w[0].0
                )));
            }
        }
        for (name, (lo, hi)) in &entries {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!(
                    "feature '{name}' has an empty or non-finite range [{lo}, {hi}]"
                )));
            }
        }
        Ok(Bounds { entries })
    }

    /// The unit box over the given feature names.
    pub fn unit<S: AsRef<str>>(names: &[S]) -> Result<Bounds> {
        Bounds::new(
            names
                .iter()
                .map(|n| (n.as_ref().to_owned(), (0.0, 1.0)))
                .collect(),
        )
    }

    /// Search dimensions.
    pub fn dims(&self) -> usize {
        self.entries.len()
    }

    /// Feature names in canonical order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Map a unit-box point to a named weight vector in this box.
    pub fn scale(&self, unit: &[f64]) -> Result<WeightVector> {
        if unit.len() != self.entries.len() {
            return Err(Error::invalid(format!(
                "{}-dimensional point in a {}-dimensional box",
                unit.len(),
                self.entries.len()
            )));
        }
        WeightVector::new(
            self.entries
                .iter()
                .zip(unit)
                .map(|((name, (lo, hi)), u)| (name.clone(), lo + u * (hi - lo)))
                .collect(),
        )
    }

    /// Map a weight vector back to unit-box coordinates.
    pub fn unscale(&self, v: &WeightVector) -> Result<Vec<f64>> {
        self.entries
            .iter()
            .map(|(name, (lo, hi))| {
                let value = v.get(name).ok_or_else(|| {
                    Error::invalid(format!("weight vector is missing feature '{name}'"))
                })?;
                Ok((value - lo) / (hi - lo))
            })
            .collect()
    }

    /// One uniform unit-box point.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.entries.len())
            .map(|_| rng.random_range(0.0..1.0))
            .collect()
    }

    /// The upper corner of the box as a weight vector — every feature at
    /// full strength.
    pub fn upper(&self) -> WeightVector {
        WeightVector::new(
            self.entries
                .iter()
                .map(|(name, (_, hi))| (name.clone(), *hi))
                .collect(),
        )
        .expect("validated bounds produce a valid weight vector")
    }
}

/// One completed trial. `wall_secs` is runtime bookkeeping only — it is
/// never serialized and does not take part in equality, so repeated runs
/// produce identical files and compare equal.
#[derive(Debug, Clone)]
pub struct Trial {
    /// Zero-based trial index.
    pub index: usize,
    /// The candidate feature weights, in box units.
    pub weights: WeightVector,
    /// Objective value (larger is better).
    pub p: f64,
    /// The derived seed the trial ran under.
    pub seed: u64,
    /// Wall-clock seconds the evaluation took.
    pub wall_secs: f64,
}

impl PartialEq for Trial {
    fn eq(&self, other: &Self) -> bool {
        self.index == other.index
            && self.weights == other.weights
            && self.p == other.p
            && self.seed == other.seed
    }
}

impl Trial {
    /// The trial as one JSON line (no trailing newline), in the same shape
    /// history files use: `{"index":…,"V":{…},"p":…,"seed":…}`.
    pub fn to_json_line(&self) -> String {
        let line = TrialLine {
            index: self.index,
            weights: self.weights.clone(),
            p: self.p,
            seed: self.seed,
        };
        serde_json::to_string(&line).expect("trial serialization cannot fail")
    }

    /// Parse one JSON trial line; the wall time is not stored, so it reads
    /// back as zero.
    pub fn from_json_line(line: &str) -> Result<Trial> {
        let rec: TrialLine = serde_json::from_str(line)
            .map_err(|e| Error::invalid(format!("bad trial line: {e}")))?;
        Ok(Trial {
            index: rec.index,
            weights: rec.weights,
            p: rec.p,
            seed: rec.seed,
            wall_secs: 0.0,
        })
    }
}

/// The serialized form of a trial: one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrialLine {
    index: usize,
    #[serde(rename = "V")]
    weights: WeightVector,
    p: f64,
    seed: u64,
}

/// An ordered log of completed trials.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialHistory {
    trials: Vec<Trial>,
}

impl TrialHistory {
    /// An empty history (a fresh search).
    pub fn new() -> TrialHistory {
        TrialHistory::default()
    }

    /// Completed trials in index order.
    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    /// Number of completed trials.
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    /// True when no trial has completed.
    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Append a trial; its index must continue the sequence.
    pub fn push(&mut self, trial: Trial) -> Result<()> {
        if trial.index != self.trials.len() {
            return Err(Error::invalid(format!(
                "trial index {} does not continue a history of {}",
                trial.index,
                self.trials.len()
            )));
        }
        if !trial.p.is_finite() {
            return Err(Error::NonFinite {
                context: format!("objective of trial {}", trial.index),
            });
        }
        self.trials.push(trial);
        Ok(())
    }

    /// The best trial: maximum objective, earliest index on ties.
    pub fn best(&self) -> Option<&Trial> {
        self.trials
            .iter()
            .reduce(|best, t| if t.p > best.p { t } else { best })
    }

    /// Write the history as JSON lines (wall-clock times excluded).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let shown = path.as_ref().display().to_string();
        let mut out = String::new();
        for t in &self.trials {
            out.push_str(&t.to_json_line());
            out.push('\n');
        }
        std::fs::write(&path, out).map_err(|e| Error::io(shown, e))
    }

    /// Load a history written by [`TrialHistory::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<TrialHistory> {
        let shown = path.as_ref().display().to_string();
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&shown, e))?;
        let mut history = TrialHistory::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&shown, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let trial = Trial::from_json_line(&line).map_err(|e| Error::Parse {
                path: shown.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            history.push(trial)?;
        }
        Ok(history)
    }
}

/// Anything the search can optimize: maps candidate weights and a derived
/// seed to an objective value, larger better. Implementations must be
/// deterministic in `(weights, seed)` for resumable searches to reproduce.
pub trait Objective {
    /// Evaluate one candidate.
    fn evaluate(&self, weights: &WeightVector, seed: u64) -> Result<f64>;
}

/// Search budget and phase boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Total trials.
    pub trials: usize,
    /// Trials before pure exploitation: after `explore` trials the
    /// acquisition switches from expected improvement to the posterior
    /// mean.
    pub explore: usize,
    /// Experiment seed all per-trial streams derive from.
    pub seed: u64,
}

impl SearchConfig {
    /// Random warm-start trials before the surrogate takes over:
    /// `max(2, ceil(explore / 5))`.
    pub fn n_init(&self) -> usize {
        (self.explore.div_ceil(5)).max(2)
    }

    /// Reject impossible budgets (zero trials, explore beyond total).
    pub fn check(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("the search needs at least one trial"));
        }
        if self.explore > self.trials {
            return Err(Error::invalid(format!(
                "explore budget {} exceeds total trials {}",
                self.explore, self.trials
            )));
        }
        Ok(())
    }
}

enum Strategy {
    Bayesian,
    Random,
}

/// Bayesian-optimization search. `resume` carries already-completed trials
/// (empty for a fresh search); the run continues from there and, because
/// every stream is derived from `(seed, trial index)`, finishes exactly as
/// an uninterrupted run would have. `on_trial` observes the growing
/// history after every completed trial (for incremental persistence).
pub fn bayesopt<O: Objective>(
    objective: &O,
    bounds: &Bounds,
    config: &SearchConfig,
    resume: TrialHistory,
    on_trial: impl FnMut(&TrialHistory) -> Result<()>,
) -> Result<TrialHistory> {
    run_search(objective, bounds, config, resume, on_trial, Strategy::Bayesian)
}

/// Pure random search over the box with the same seeding scheme — the
/// classic baseline for the Bayesian search.
pub fn random_search<O: Objective>(
    objective: &O,
    bounds: &Bounds,
    config: &SearchConfig,
    on_trial: impl FnMut(&TrialHistory) -> Result<()>,
) -> Result<TrialHistory> {
    run_search(
        objective,
        bounds,
        config,
        TrialHistory::new(),
        on_trial,
        Strategy::Random,
    )
}

fn run_search<O: Objective>(
    objective: &O,
    bounds: &Bounds,
    config: &SearchConfig,
    mut history: TrialHistory,
    mut on_trial: impl FnMut(&TrialHistory) -> Result<()>,
    strategy: Strategy,
) -> Result<TrialHistory> {
    config.check()?;
    let n_init = config.n_init();
    for index in history.len()..config.trials {
        let unit = match strategy {
            Strategy::Random => bounds.sample(&mut seeded_rng(config.seed, &format!("init:{index}"))),
            Strategy::Bayesian if index < n_init => {
                bounds.sample(&mut seeded_rng(config.seed, &format!("init:{index}")))
            }
            Strategy::Bayesian => {
                let x: Vec<Vec<f64>> = history
                    .trials()
                    .iter()
                    .map(|t| bounds.unscale(&t.weights))
                    .collect::<Result<_>>()?;
                let y: Vec<f64> = history.trials().iter().map(|t| t.p).collect();
                let best = history.best().expect("history is non-empty here").p;
                let gp = GpSurrogate::fit(x, y)?;
                let acquisition = if index < config.explore {
                    Acquisition::ExpectedImprovement { best }
                } else {
                    Acquisition::PosteriorMean
                };
                gp::propose_next(
                    &gp,
                    acquisition,
                    bounds.dims(),
                    &mut seeded_rng(config.seed, &format!("propose:{index}")),
                )
            }
        };
        let weights = bounds.scale(&unit)?;
        let seed = derive_seed(config.seed, &format!("trial:{index}"));
        let started = Instant::now();
        let p = objective.evaluate(&weights, seed)?;
        history.push(Trial {
            index,
            weights,
            p,
            seed,
            wall_secs: started.elapsed().as_secs_f64(),
        })?;
        on_trial(&history)?;
    }
    Ok(history)
}

/// The fixed no-search baseline: every feature at the top of its range.
pub fn uniform_baseline(bounds: &Bounds) -> WeightVector {
    bounds.upper()
}

/// Assemble a ratio-controlled mixed-domain validation set.
///
/// Ratios must be non-negative and sum to one, and every named domain must
/// exist in `sets`. The mixture size is the largest total every positive-
/// ratio domain can supply its share of: with `L = min over those domains
/// of (set size / ratio)`, domain `k` contributes `round(ratio_k * L)`
/// pairs, drawn without replacement under a per-domain derived stream and
/// concatenated in domain name order. A zero ratio contributes nothing; a
/// positive ratio over an empty set is an error.
pub fn mix_validation(
    sets: &BTreeMap<String, Vec<SentencePair>>,
    ratios: &BTreeMap<String, f64>,
    seed: u64,
) -> Result<Vec<SentencePair>> {
    if ratios.is_empty() {
        return Err(Error::invalid("mixing needs at least one ratio"));
    }
    let mut total = 0.0;
    for (name, &r) in ratios {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::invalid(format!(
                "mixing ratio for '{name}' must be a finite non-negative number, got {r}"
            )));
        }
        if !sets.contains_key(name) {
            return Err(Error::invalid(format!(
                "mixing ratio names unknown validation set '{name}'"
            )));
        }
        total += r;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "mixing ratios must sum to 1, got {total}"
        )));
    }

    // Scale to the largest total each positive-ratio set can cover.
    let mut scaled = f64::INFINITY;
    for (name, &r) in ratios {
        if r > 0.0 {
            let n = sets[name].len();
            if n == 0 {
                return Err(Error::invalid(format!(
                    "validation set '{name}' is empty but its ratio is {r}"
                )));
            }
            scaled = scaled.min(n as f64 / r);
        }
    }

    let mut mixed = Vec::new();
    for (name, &r) in ratios {
        let take = (r * scaled).round() as usize;
        if take == 0 {
            continue;
        }
        let pairs = &sets[name];
        // Partial Fisher-Yates: the first `take` slots are a uniform sample
        // without replacement, in draw order.
        let mut rng = seeded_rng(seed, &format!("mix:{name}"));
        let mut positions: Vec<usize> = (0..pairs.len()).collect();
        for i in 0..take {
            let j = rng.random_range(i..positions.len());
            positions.swap(i, j);
        }
        mixed.extend(positions[..take].iter().map(|&i| pairs[i].clone()));
    }
    Ok(mixed)
}

/// The real objective the weight search optimizes: score the corpus with
/// the candidate weights, train briefly under the curriculum, report
/// negated validation perplexity.
#[derive(Debug, Clone)]
pub struct CurriculumObjective<'a> {
    /// Corpus with all feature columns attached (scores are computed per
    /// candidate).
    pub corpus: &'a ScoredCorpus,
    /// Model every trial starts from.
    pub base: &'a ToyTranslationModel,
    /// Decay schedule for the trial runs.
    pub schedule: Schedule,
    /// Trial training loop parameters.
    pub trainer: Trainer,
    /// Mixed-domain validation pairs.
    pub validation: &'a [SentencePair],
}

impl Objective for CurriculumObjective<'_> {
    fn evaluate(&self, weights: &WeightVector, seed: u64) -> Result<f64> {
        let mut corpus = self.corpus.clone();
        corpus.score_with(weights)?;
        let outcome = self
            .trainer
            .run_curriculum(self.base, &corpus, &self.schedule, seed)?;
        let perplexity = outcome.model.perplexity(self.validation);
        if !perplexity.is_finite() {
            return Err(Error::NonFinite {
                context: "validation perplexity".into(),
            });
        }
        Ok(-perplexity)
    }
}
