//! Experiment configuration: one JSON file describing corpora, features,
//! schedule, tuning, and validation mixing.
//!
//! Commands load a config, apply flag overrides, and run. Relative paths in
//! the file are resolved against the config file's own directory at load
//! time, so a config travels with its data. Parsing is strict — unknown
//! keys are errors — and a parsed config serializes back to an equivalent
//! config (`parse ∘ serialize ∘ parse = parse`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusFormat;
use crate::curriculum::Schedule;
use crate::error::{Error, Result};
use crate::features::DEFAULT_BUCKETS;
use crate::optimizer::SearchConfig;

/// A full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; all randomness derives from it.
    pub seed: u64,
    /// Training corpus path.
    pub train: PathBuf,
    /// Training corpus file format.
    #[serde(default = "default_format")]
    pub format: CorpusFormat,
    /// Trusted in-domain parallel data, per domain.
    #[serde(default)]
    pub seeds: BTreeMap<String, PathBuf>,
    /// Held-out parallel data, per domain.
    pub validation: BTreeMap<String, PathBuf>,
    /// Monolingual source text, per domain.
    #[serde(default)]
    pub monolingual: BTreeMap<String, PathBuf>,
    /// Pooled monolingual source text for the base language model.
    #[serde(default)]
    pub base_monolingual: Option<PathBuf>,
    /// Features to compute, in order.
    pub features: Vec<FeatureSpec>,
    /// Selection-decay shape.
    #[serde(default)]
    pub schedule: ScheduleConfig,
    /// Gradient-ascent loop parameters.
    #[serde(default)]
    pub training: TrainingConfig,
    /// Weight-search parameters.
    #[serde(default)]
    pub tuning: TuningConfig,
    /// Validation mixing ratios by domain; must sum to 1.
    pub mix: BTreeMap<String, f64>,
    /// Output root for everything the commands write; defaults to `out`
    /// beside the config file.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Optional per-pair quality ratings (`id<TAB>value` lines) folded into
    /// the selection-composition report.
    #[serde(default)]
    pub ratings: Option<PathBuf>,
}

fn default_format() -> CorpusFormat {
    CorpusFormat::Tsv
}

/// One feature column to compute for every training pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeatureSpec {
    /// Source-side language-model advantage of a domain-adapted n-gram LM
    /// over the base LM.
    Nlm {
        /// Feature column name.
        name: String,
        /// Domain whose monolingual text adapts the LM.
        domain: String,
        /// N-gram order.
        #[serde(default = "default_order")]
        order: usize,
        /// Interpolation weight toward the domain-only LM, in `[0, 1]`.
        #[serde(default = "default_mu")]
        mu: f64,
    },
    /// Translation-model advantage of a seed-adapted model over the base
    /// model, per target token.
    Nmt {
        /// Feature column name.
        name: String,
        /// Domain whose seed pairs adapt the model.
        domain: String,
        /// Adaptation step size.
        #[serde(default = "default_adapt_lr")]
        learning_rate: f64,
        /// Full-batch adaptation steps.
        #[serde(default = "default_adapt_steps")]
        steps: u64,
    },
    /// Like `nmt`, but adapted on the concatenation of every domain's seed
    /// pairs at once.
    MultiNmt {
        /// Feature column name.
        name: String,
        /// Adaptation step size.
        #[serde(default = "default_adapt_lr")]
        learning_rate: f64,
        /// Full-batch adaptation steps.
        #[serde(default = "default_adapt_steps")]
        steps: u64,
    },
    /// Hashed character-n-gram cosine between a pair's source and target.
    Emb {
        /// Feature column name.
        name: String,
        /// Hash bucket count.
        #[serde(default = "default_buckets")]
        buckets: usize,
    },
    /// A pre-computed column joined from an `id<TAB>value` file.
    External {
        /// Feature column name.
        name: String,
        /// File to join.
        path: PathBuf,
    },
}

fn default_order() -> usize {
    3
}
fn default_mu() -> f64 {
    0.5
}
fn default_adapt_lr() -> f64 {
    1e-2
}
fn default_adapt_steps() -> u64 {
    10
}
fn default_buckets() -> usize {
    DEFAULT_BUCKETS
}

impl FeatureSpec {
    /// The feature column this spec produces.
    pub fn name(&self) -> &str {
        match self {
            FeatureSpec::Nlm { name, .. }
            | FeatureSpec::Nmt { name, .. }
            | FeatureSpec::MultiNmt { name, .. }
            | FeatureSpec::Emb { name, .. }
            | FeatureSpec::External { name, .. } => name,
        }
    }
}

/// Shape of the retained-fraction decay (lengths come from the command:
/// trial steps while tuning, final steps while training).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Plateau value of the retained fraction.
    pub floor: f64,
    /// Steps before the decay starts.
    pub warmup: u64,
    /// Direct halving constant; overrides `plateau_step` when set.
    #[serde(default)]
    pub halving: Option<f64>,
    /// Step at which the decay is to reach the floor (used when `halving`
    /// is unset).
    #[serde(default)]
    pub plateau_step: Option<u64>,
}

impl Default for ScheduleConfig {
    fn default() -> ScheduleConfig {
        ScheduleConfig {
            floor: 0.2,
            warmup: 0,
            halving: None,
            plateau_step: Some(2000),
        }
    }
}

impl ScheduleConfig {
    /// Concretize for a run of `max_steps` steps.
    pub fn build(&self, max_steps: u64) -> Result<Schedule> {
        if let Some(h) = self.halving {
            return Schedule::new(h, self.floor, self.warmup, max_steps);
        }
        if self.floor == 1.0 {
            return Ok(Schedule::constant(max_steps));
        }
        let at = self.plateau_step.ok_or_else(|| {
            Error::invalid("schedule needs either a halving constant or a plateau step")
        })?;
        Schedule::reaching(self.floor, at, self.warmup, max_steps)
    }
}

/// Gradient-ascent loop parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// Step size on the mean batch gradient.
    pub learning_rate: f64,
    /// Pairs sampled per step.
    pub batch_size: usize,
    /// Steps for a full (non-trial) training run.
    pub final_steps: u64,
    /// Step size for post-training fine-tuning on a seed corpus.
    pub finetune_learning_rate: f64,
    /// Full-batch steps for post-training fine-tuning.
    pub finetune_steps: u64,
}

impl Default for TrainingConfig {
    fn default() -> TrainingConfig {
        TrainingConfig {
            learning_rate: 0.05,
            batch_size: 8,
            final_steps: 4000,
            finetune_learning_rate: 1e-2,
            finetune_steps: 50,
        }
    }
}

/// Weight-search parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    /// Total trials.
    pub trials: usize,
    /// Trials before switching from improvement-seeking to mean-seeking
    /// proposals.
    pub explore: usize,
    /// Training steps per trial.
    pub trial_steps: u64,
}

impl Default for TuningConfig {
    fn default() -> TuningConfig {
        TuningConfig {
            trials: 30,
            explore: 25,
            trial_steps: 2000,
        }
    }
}

impl TuningConfig {
    /// Searcher settings under the experiment's master seed.
    pub fn search_config(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            trials: self.trials,
            explore: self.explore,
            seed,
        }
    }
}

impl ExperimentConfig {
    /// Parse a config from JSON text (no path resolution, no validation).
    pub fn from_json_str(text: &str) -> Result<ExperimentConfig> {
        serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("config parse error: {e}")))
    }

    /// Serialize back to pretty JSON.
    pub fn to_json_string(&self) -> String {
        let mut out =
            serde_json::to_string_pretty(self).expect("config serialization cannot fail");
        out.push('\n');
        out
    }

    /// Load from a file: parse, resolve relative paths against the file's
    /// directory, fill the default output root, and validate.
    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(&shown, e))?;
        let mut config = Self::from_json_str(&text)
            .map_err(|e| Error::invalid(format!("{shown}: {e}")))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(dir);
        config.validate()?;
        Ok(config)
    }

    /// Rebase every relative path onto `dir` and default the output root.
    pub fn resolve_paths(&mut self, dir: &Path) {
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&p);
            }
        };
        rebase(&mut self.train);
        self.seeds.values_mut().for_each(rebase);
        self.validation.values_mut().for_each(rebase);
        self.monolingual.values_mut().for_each(rebase);
        if let Some(p) = self.base_monolingual.as_mut() {
            rebase(p);
        }
        for spec in &mut self.features {
            if let FeatureSpec::External { path, .. } = spec {
                rebase(path);
            }
        }
        if let Some(p) = self.output.as_mut() {
            rebase(p);
        } else {
            self.output = Some(dir.join("out"));
        }
        if let Some(p) = self.ratings.as_mut() {
            rebase(p);
        }
    }

    /// The resolved output root.
    pub fn output_root(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Structural validation: unique feature names, known domains,
    /// plausible numbers. File existence is checked by the commands that
    /// read each file.
    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::invalid("config declares no features"));
        }
        let mut names: Vec<&str> = self.features.iter().map(|f| f.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("feature names must be unique"));
        }
        if names.iter().any(|n| n.is_empty()) {
            return Err(Error::invalid("feature names must be non-empty"));
        }
        for spec in &self.features {
            match spec {
                FeatureSpec::Nlm {
                    name, domain, order, mu,
                } => {
                    if !self.monolingual.contains_key(domain) {
                        return Err(Error::invalid(format!(
                            "feature '{name}' wants monolingual text for unknown domain '{domain}'"
                        )));
                    }
                    if self.base_monolingual.is_none() {
                        return Err(Error::invalid(format!(
                            "feature '{name}' needs base_monolingual to be set"
                        )));
                    }
                    if *order == 0 {
                        return Err(Error::invalid(format!(
                            "feature '{name}' has n-gram order 0"
                        )));
                    }
                    if !(mu.is_finite() && (0.0..=1.0).contains(mu)) {
                        return Err(Error::invalid(format!(
                            "feature '{name}' has interpolation weight {mu} outside [0, 1]"
                        )));
                    }
                }
                FeatureSpec::Nmt {
                    name,
                    domain,
                    learning_rate,
                    ..
                } => {
                    if !self.seeds.contains_key(domain) {
                        return Err(Error::invalid(format!(
                            "feature '{name}' wants seed pairs for unknown domain '{domain}'"
                        )));
                    }
                    check_positive(name, "learning rate", *learning_rate)?;
                }
                FeatureSpec::MultiNmt {
                    name, learning_rate, ..
                } => {
                    if self.seeds.is_empty() {
                        return Err(Error::invalid(format!(
                            "feature '{name}' needs at least one seed corpus"
                        )));
                    }
                    check_positive(name, "learning rate", *learning_rate)?;
                }
                FeatureSpec::Emb { name, buckets } => {
                    if *buckets == 0 {
                        return Err(Error::invalid(format!(
                            "feature '{name}' has zero hash buckets"
                        )));
                    }
                }
                FeatureSpec::External { .. } => {}
            }
        }
        if self.validation.is_empty() {
            return Err(Error::invalid("config declares no validation sets"));
        }
        if self.mix.is_empty() {
            return Err(Error::invalid("config declares no mixing ratios"));
        }
        for domain in self.mix.keys() {
            if !self.validation.contains_key(domain) {
                return Err(Error::invalid(format!(
                    "mixing ratio names unknown validation set '{domain}'"
                )));
            }
        }
        let total: f64 = self.mix.values().sum();
        if self.mix.values().any(|r| !r.is_finite() || *r < 0.0) || (total - 1.0).abs() > 1e-9
        {
            return Err(Error::invalid(format!(
                "mixing ratios must be non-negative and sum to 1, got {total}"
            )));
        }
        if !(self.schedule.floor.is_finite()
            && self.schedule.floor > 0.0
            && self.schedule.floor <= 1.0)
        {
            return Err(Error::invalid(format!(
                "schedule floor {} outside (0, 1]",
                self.schedule.floor
            )));
        }
        check_positive("training", "learning rate", self.training.learning_rate)?;
        check_positive(
            "training",
            "fine-tune learning rate",
            self.training.finetune_learning_rate,
        )?;
        if self.training.batch_size == 0 {
            return Err(Error::invalid("training batch size must be at least 1"));
        }
        if self.training.final_steps == 0 {
            return Err(Error::invalid("final training length must be at least 1 step"));
        }
        self.tuning.search_config(self.seed).check()?;
        Ok(())
    }

    /// Feature names in declaration order.
    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name().to_owned()).collect()
    }
}

fn check_positive(owner: &str, what: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::invalid(format!(
            "{owner}: {what} must be positive and finite, got {value}"
        )));
    }
    Ok(())
}

/// The standard config for a corpus directory laid out by
/// [`crate::synth::SynthCorpus::write_to`]: per domain one LM feature and
/// one translation-model feature, plus a shared multi-domain feature and a
/// source↔target similarity feature, with equal mixing ratios.
pub fn synth_layout_config(dir: &Path, domains: &[String], seed: u64) -> ExperimentConfig {
    let mut features = Vec::new();
    for d in domains {
        features.push(FeatureSpec::Nlm {
            name: format!("d_{d}"),
            domain: d.clone(),
            order: default_order(),
            mu: default_mu(),
        });
        features.push(FeatureSpec::Nmt {
            name: format!("q_{d}"),
            domain: d.clone(),
            learning_rate: default_adapt_lr(),
            steps: default_adapt_steps(),
        });
    }
    features.push(FeatureSpec::MultiNmt {
        name: "q_multi".into(),
        learning_rate: default_adapt_lr(),
        steps: default_adapt_steps(),
    });
    features.push(FeatureSpec::Emb {
        name: "emb".into(),
        buckets: default_buckets(),
    });

    let per_domain =
        |sub: &str, ext: &str| -> BTreeMap<String, PathBuf> {
            domains
                .iter()
                .map(|d| (d.clone(), dir.join(sub).join(format!("{d}.{ext}"))))
                .collect()
        };
    let ratio = 1.0 / domains.len() as f64;

    ExperimentConfig {
        seed,
        train: dir.join("train.tsv"),
        format: CorpusFormat::Tsv,
        seeds: per_domain("seeds", "tsv"),
        validation: per_domain("validation", "tsv"),
        monolingual: per_domain("mono", "txt"),
        base_monolingual: Some(dir.join("mono").join("base.txt")),
        features,
        schedule: ScheduleConfig::default(),
        training: TrainingConfig::default(),
        tuning: TuningConfig::default(),
        mix: domains.iter().map(|d| (d.clone(), ratio)).collect(),
        output: Some(dir.join("out")),
        ratings: Some(dir.join("ratings.tsv")),
    }
}
