//! Experiment orchestration: the command layer behind the binary.
//!
//! Each command reads an [`ExperimentConfig`], does one stage of the
//! pipeline, and leaves its results as files under one output root, which
//! later stages read back. The layout:
//!
//! ```text
//! <out>/
//!   features/<name>.tsv          score:     id <TAB> value, one file per feature
//!   scores.tsv                   normalize: id <TAB> f <TAB> percentile
//!   tune/<method>/trials.jsonl   tune:      one JSON trial per line
//!   tune/<method>/best.json      tune:      the best trial, same line shape
//!   runs/<name>/model.json       train:     final model
//!   runs/<name>/model_finetuned_<domain>.json
//!   runs/<name>/log.tsv          train:     step log
//!   runs/<name>/run.json         train:     what produced this run
//!   runs/<name>/eval.tsv         eval:      model <TAB> set <TAB> perplexity
//!   report.tsv                   report:    one row per run
//!   balance.tsv                  report:    selection composition by threshold
//! ```
//!
//! Every command is deterministic: rerunning with the same config, flags,
//! and inputs rewrites byte-identical files. The output root comes from the
//! `--out` flag, else the `CURRICULA_OUT` environment variable, else the
//! config's `output` field.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::{ExperimentConfig, FeatureSpec};
use crate::corpus::{ScoredCorpus, SentencePair, WeightVector};
use crate::curriculum::{
    dynamic_balance_report, BalanceRow, Schedule, StepRecord, Trainer,
};
use crate::error::{Error, Result};
use crate::features::{
    embedding_similarity_feature, nlm_domain_feature, read_monolingual, train_ngram_lm,
    InterpolatedLm, NGramLm, SmoothingConfig,
};
use crate::optimizer::{
    bayesopt, mix_validation, random_search, uniform_baseline, CurriculumObjective, Objective,
    Trial, TrialHistory,
};
use crate::rng::derive_seed;
use crate::translation::{multi_domain_model, nmt_domain_feature, ToyTranslationModel};

/// Environment variable naming the output root when `--out` is not given.
pub const OUTPUT_ENV: &str = "CURRICULA_OUT";

/// Percentile cuts tabulated by the selection-composition report.
pub const BALANCE_THRESHOLDS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9];

/// Added smoothing mass per n-gram event in the language-model features.
const LM_ADD_K: f64 = 0.1;

/// Pick the output root: explicit flag, else `CURRICULA_OUT`, else the
/// config's `output` field.
pub fn resolve_output(config: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(v) = std::env::var_os(OUTPUT_ENV) {
        if !v.is_empty() {
            return PathBuf::from(v);
        }
    }
    config.output_root()
}

/// Where each artifact of one output root lives.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    root: PathBuf,
}

impl OutputLayout {
    /// Lay out paths under `root`.
    pub fn new(root: impl Into<PathBuf>) -> OutputLayout {
        OutputLayout { root: root.into() }
    }

    /// The root itself.
    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Directory of per-feature column files.
    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }

    /// Column file for one feature.
    pub fn feature_file(&self, name: &str) -> PathBuf {
        self.features_dir().join(format!("{name}.tsv"))
    }

    /// Aggregated-and-normalized scores.
    pub fn scores_file(&self) -> PathBuf {
        self.root.join("scores.tsv")
    }

    /// Directory of one tuning method's outputs.
    pub fn tune_dir(&self, method: TuneMethod) -> PathBuf {
        self.root.join("tune").join(method.name())
    }

    /// Trial history of one tuning method.
    pub fn trials_file(&self, method: TuneMethod) -> PathBuf {
        self.tune_dir(method).join("trials.jsonl")
    }

    /// Best trial of one tuning method.
    pub fn best_file(&self, method: TuneMethod) -> PathBuf {
        self.tune_dir(method).join("best.json")
    }

    /// Directory holding all training runs.
    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    /// Directory of one training run.
    pub fn run_dir(&self, run: &str) -> PathBuf {
        self.runs_dir().join(run)
    }

    /// A run's final model.
    pub fn model_file(&self, run: &str) -> PathBuf {
        self.run_dir(run).join("model.json")
    }

    /// A run's post-training fine-tuned model for one domain.
    pub fn finetuned_model_file(&self, run: &str, domain: &str) -> PathBuf {
        self.run_dir(run).join(format!("model_finetuned_{domain}.json"))
    }

    /// A run's step log.
    pub fn log_file(&self, run: &str) -> PathBuf {
        self.run_dir(run).join("log.tsv")
    }

    /// A run's provenance record.
    pub fn run_meta_file(&self, run: &str) -> PathBuf {
        self.run_dir(run).join("run.json")
    }

    /// A run's evaluation table.
    pub fn eval_file(&self, run: &str) -> PathBuf {
        self.run_dir(run).join("eval.tsv")
    }

    /// The cross-run comparison table.
    pub fn report_file(&self) -> PathBuf {
        self.root.join("report.tsv")
    }

    /// The selection-composition table.
    pub fn balance_file(&self) -> PathBuf {
        self.root.join("balance.tsv")
    }
}

/// Which searcher `tune` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneMethod {
    /// Surrogate-guided search.
    Bayesian,
    /// Uniform random proposals.
    Random,
    /// No search: evaluate the all-ones weights once.
    Uniform,
}

impl TuneMethod {
    /// Short name used in flags and directory names.
    pub fn name(&self) -> &'static str {
        match self {
            TuneMethod::Bayesian => "bo",
            TuneMethod::Random => "rs",
            TuneMethod::Uniform => "uniform",
        }
    }
}

impl FromStr for TuneMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<TuneMethod> {
        match s {
            "bo" => Ok(TuneMethod::Bayesian),
            "rs" => Ok(TuneMethod::Random),
            "uniform" => Ok(TuneMethod::Uniform),
            other => Err(Error::invalid(format!(
                "unknown tuning method '{other}' (expected 'bo', 'rs', or 'uniform')"
            ))),
        }
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    std::fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Load the training corpus (features not yet attached).
pub fn load_train(config: &ExperimentConfig) -> Result<ScoredCorpus> {
    ScoredCorpus::ingest_parallel(&config.train, config.format)
}

fn load_pairs(config: &ExperimentConfig, path: &Path) -> Result<Vec<SentencePair>> {
    Ok(ScoredCorpus::ingest_parallel(path, config.format)?
        .pairs()
        .to_vec())
}

/// Load every per-domain validation set.
pub fn load_validation_sets(
    config: &ExperimentConfig,
) -> Result<BTreeMap<String, Vec<SentencePair>>> {
    config
        .validation
        .iter()
        .map(|(name, path)| Ok((name.clone(), load_pairs(config, path)?)))
        .collect()
}

/// The ratio-mixed validation set every tuning trial and evaluation scores
/// against, deterministic in the config's seed.
pub fn load_validation_mixture(config: &ExperimentConfig) -> Result<Vec<SentencePair>> {
    let sets = load_validation_sets(config)?;
    mix_validation(&sets, &config.mix, config.seed)
}

/// Restrict the config's feature list to the named ones. Each selector is
/// either a feature name or `kind:name`, where the kind must match the
/// config's declaration.
pub fn select_features(
    config: &ExperimentConfig,
    selectors: &[String],
) -> Result<Vec<FeatureSpec>> {
    if selectors.is_empty() {
        return Ok(config.features.clone());
    }
    let kind_of = |spec: &FeatureSpec| match spec {
        FeatureSpec::Nlm { .. } => "nlm",
        FeatureSpec::Nmt { .. } => "nmt",
        FeatureSpec::MultiNmt { .. } => "multi-nmt",
        FeatureSpec::Emb { .. } => "emb",
        FeatureSpec::External { .. } => "external",
    };
    let mut picked = Vec::new();
    for selector in selectors {
        let (want_kind, want_name) = match selector.split_once(':') {
            Some((k, n)) => (Some(k), n),
            None => (None, selector.as_str()),
        };
        let spec = config
            .features
            .iter()
            .find(|s| s.name() == want_name)
            .ok_or_else(|| {
                Error::invalid(format!("config declares no feature named '{want_name}'"))
            })?;
        if let Some(k) = want_kind {
            if k != kind_of(spec) {
                return Err(Error::invalid(format!(
                    "feature '{want_name}' is declared as kind '{}', not '{k}'",
                    kind_of(spec)
                )));
            }
        }
        picked.push(spec.clone());
    }
    Ok(picked)
}

/// Compute the raw value columns for the given feature specs over the
/// training corpus. Shared resources (language models, the base
/// translation model, seed corpora) are built once and reused.
pub fn compute_features(
    config: &ExperimentConfig,
    corpus: &ScoredCorpus,
    specs: &[FeatureSpec],
    base_model: Option<&ToyTranslationModel>,
) -> Result<Vec<(String, Vec<f64>)>> {
    // What the specs need, so each shared resource is built exactly once.
    let mut lm_orders: BTreeSet<usize> = BTreeSet::new();
    let mut domain_lms_wanted: BTreeSet<(String, usize)> = BTreeSet::new();
    let mut seed_domains: BTreeSet<String> = BTreeSet::new();
    let mut needs_toy = false;
    let mut needs_all_seeds = false;
    for spec in specs {
        match spec {
            FeatureSpec::Nlm { domain, order, .. } => {
                lm_orders.insert(*order);
                domain_lms_wanted.insert((domain.clone(), *order));
            }
            FeatureSpec::Nmt { domain, .. } => {
                needs_toy = true;
                seed_domains.insert(domain.clone());
            }
            FeatureSpec::MultiNmt { .. } => {
                needs_toy = true;
                needs_all_seeds = true;
            }
            FeatureSpec::Emb { .. } | FeatureSpec::External { .. } => {}
        }
    }
    if needs_all_seeds {
        seed_domains.extend(config.seeds.keys().cloned());
    }

    let base_sentences = if lm_orders.is_empty() {
        Vec::new()
    } else {
        let path = config.base_monolingual.as_ref().ok_or_else(|| {
            Error::invalid("language-model features need base_monolingual in the config")
        })?;
        read_monolingual(path)?
    };
    let mut base_lms: BTreeMap<usize, NGramLm> = BTreeMap::new();
    for &order in &lm_orders {
        base_lms.insert(
            order,
            train_ngram_lm(
                &base_sentences,
                order,
                SmoothingConfig::uniform(order, LM_ADD_K),
            )?,
        );
    }
    let mut domain_lms: BTreeMap<(String, usize), NGramLm> = BTreeMap::new();
    for (domain, order) in &domain_lms_wanted {
        let path = config.monolingual.get(domain).ok_or_else(|| {
            Error::invalid(format!("no monolingual text configured for domain '{domain}'"))
        })?;
        let sentences = read_monolingual(path)?;
        domain_lms.insert(
            (domain.clone(), *order),
            train_ngram_lm(
                &sentences,
                *order,
                SmoothingConfig::uniform(*order, LM_ADD_K),
            )?,
        );
    }

    let owned_toy = if needs_toy && base_model.is_none() {
        Some(ToyTranslationModel::from_pairs(corpus.pairs())?)
    } else {
        None
    };
    let toy_base = if needs_toy {
        Some(base_model.unwrap_or_else(|| owned_toy.as_ref().expect("built above")))
    } else {
        None
    };
    let mut seeds: BTreeMap<String, Vec<SentencePair>> = BTreeMap::new();
    for domain in &seed_domains {
        let path = config.seeds.get(domain).ok_or_else(|| {
            Error::invalid(format!("no seed corpus configured for domain '{domain}'"))
        })?;
        seeds.insert(domain.clone(), load_pairs(config, path)?);
    }

    let mut columns = Vec::with_capacity(specs.len());
    for spec in specs {
        let name = spec.name().to_owned();
        let values: Vec<f64> = match spec {
            FeatureSpec::Nlm {
                domain, order, mu, ..
            } => {
                let base = &base_lms[order];
                let adapted =
                    InterpolatedLm::new(base, &domain_lms[&(domain.clone(), *order)], *mu)?;
                corpus
                    .pairs()
                    .iter()
                    .map(|p| nlm_domain_feature(&p.source, base, &adapted))
                    .collect()
            }
            FeatureSpec::Nmt {
                domain,
                learning_rate,
                steps,
                ..
            } => {
                let base = toy_base.expect("needs_toy was set");
                let adapted = base.finetune(&seeds[domain], *learning_rate, *steps as usize);
                score_nmt(corpus, base, &adapted)?
            }
            FeatureSpec::MultiNmt {
                learning_rate,
                steps,
                ..
            } => {
                let base = toy_base.expect("needs_toy was set");
                let seed_slices: Vec<&[SentencePair]> =
                    seeds.values().map(|v| v.as_slice()).collect();
                let adapted =
                    multi_domain_model(base, &seed_slices, *learning_rate, *steps as usize)?;
                score_nmt(corpus, base, &adapted)?
            }
            FeatureSpec::Emb { buckets, .. } => corpus
                .pairs()
                .iter()
                .map(|p| embedding_similarity_feature(p, *buckets))
                .collect(),
            FeatureSpec::External { path, .. } => {
                let mut scratch = corpus.clone();
                scratch.join_external_features(path, Some(&name))?;
                scratch
                    .feature_column(&name)
                    .expect("just joined")
                    .to_vec()
            }
        };
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("feature '{name}' at id {}", corpus.pairs()[i].id),
            });
        }
        columns.push((name, values));
    }
    Ok(columns)
}

fn score_nmt(
    corpus: &ScoredCorpus,
    base: &ToyTranslationModel,
    adapted: &ToyTranslationModel,
) -> Result<Vec<f64>> {
    corpus
        .pairs()
        .iter()
        .map(|p| nmt_domain_feature(p, base, adapted))
        .collect()
}

/// Compute every configured feature (or the selected subset) and write one
/// `id<TAB>value` column file per feature. Returns the files written, in
/// declaration order.
pub fn cmd_score(
    config: &ExperimentConfig,
    out: &Path,
    selectors: &[String],
    base_model: Option<&Path>,
) -> Result<Vec<(String, PathBuf)>> {
    let layout = OutputLayout::new(out);
    let corpus = load_train(config)?;
    let specs = select_features(config, selectors)?;
    let loaded_base = base_model.map(ToyTranslationModel::load).transpose()?;
    let columns = compute_features(config, &corpus, &specs, loaded_base.as_ref())?;

    let mut written = Vec::with_capacity(columns.len());
    for (name, values) in columns {
        let mut text = String::new();
        for (pair, value) in corpus.pairs().iter().zip(&values) {
            writeln!(text, "{}\t{}", pair.id, value).expect("string write cannot fail");
        }
        let path = layout.feature_file(&name);
        write_file(&path, &text)?;
        written.push((name, path));
    }
    Ok(written)
}

/// Attach every configured feature column from the files `score` wrote.
pub fn join_feature_files(
    config: &ExperimentConfig,
    out: &Path,
    corpus: &mut ScoredCorpus,
) -> Result<()> {
    let layout = OutputLayout::new(out);
    for name in config.feature_names() {
        corpus.join_external_features(layout.feature_file(&name), Some(&name))?;
    }
    Ok(())
}

/// Read a weight vector from a file holding either a bare `{name: value}`
/// object or a trial line (whose `"V"` field is used).
pub fn load_weights(path: &Path) -> Result<WeightVector> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&shown, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: shown.clone(),
            source: e,
        })?;
    let map = match value.get("V") {
        Some(v) => v.clone(),
        None => value,
    };
    serde_json::from_value(map).map_err(|e| Error::Json {
        path: shown,
        source: e,
    })
}

fn weights_or_uniform(
    config: &ExperimentConfig,
    weights: Option<&Path>,
) -> Result<WeightVector> {
    match weights {
        Some(path) => load_weights(path),
        None => WeightVector::constant(&config.feature_names(), 1.0),
    }
}

/// What `normalize` produced.
#[derive(Debug, Clone)]
pub struct NormalizeOutcome {
    /// Where the scores table went.
    pub scores_path: PathBuf,
    /// Pairs scored.
    pub pairs: usize,
    /// The weights used.
    pub weights: WeightVector,
}

/// Aggregate the scored feature columns with a weight vector (all ones
/// unless a weights file is given) and percentile-normalize; writes
/// `scores.tsv` with `id<TAB>f<TAB>percentile` lines.
pub fn cmd_normalize(
    config: &ExperimentConfig,
    out: &Path,
    weights: Option<&Path>,
) -> Result<NormalizeOutcome> {
    let layout = OutputLayout::new(out);
    let mut corpus = load_train(config)?;
    join_feature_files(config, out, &mut corpus)?;
    let v = weights_or_uniform(config, weights)?;
    corpus.score_with(&v)?;

    let f = corpus.f().expect("just scored");
    let percentile = corpus.percentile().expect("just scored");
    let mut text = String::new();
    for (pos, pair) in corpus.pairs().iter().enumerate() {
        writeln!(text, "{}\t{}\t{}", pair.id, f[pos], percentile[pos])
            .expect("string write cannot fail");
    }
    write_file(&layout.scores_file(), &text)?;
    Ok(NormalizeOutcome {
        scores_path: layout.scores_file(),
        pairs: corpus.len(),
        weights: v,
    })
}

/// The warm starting model every tuning trial fine-tunes: the fresh base
/// model trained uniformly (no selection) for one trial budget under the
/// derived seed `"warmup"`.
pub fn warm_model(
    config: &ExperimentConfig,
    corpus: &ScoredCorpus,
) -> Result<ToyTranslationModel> {
    let base = ToyTranslationModel::from_pairs(corpus.pairs())?;
    let mut flat = corpus.clone();
    flat.score_with(&WeightVector::constant(&config.feature_names(), 0.0)?)?;
    let schedule = Schedule::constant(config.tuning.trial_steps);
    let trainer = trainer_of(config);
    let outcome = trainer.run_curriculum(
        &base,
        &flat,
        &schedule,
        derive_seed(config.seed, "warmup"),
    )?;
    Ok(outcome.model)
}

fn trainer_of(config: &ExperimentConfig) -> Trainer {
    Trainer {
        learning_rate: config.training.learning_rate,
        batch_size: config.training.batch_size,
    }
}

/// What `tune` produced.
#[derive(Debug)]
pub struct TuneOutcome {
    /// The full trial history.
    pub history: TrialHistory,
    /// The best trial found.
    pub best: Trial,
    /// Where the history went.
    pub trials_path: PathBuf,
    /// Where the best trial went.
    pub best_path: PathBuf,
}

/// Search feature weights by short curriculum trials. The history is saved
/// after every trial; with `resume` the Bayesian method continues an
/// existing history to the configured trial count instead of starting over.
/// Random-search trials are independent and index-seeded, so a rerun
/// reproduces the same history whether or not it resumes.
pub fn cmd_tune(
    config: &ExperimentConfig,
    out: &Path,
    method: TuneMethod,
    resume: bool,
) -> Result<TuneOutcome> {
    let layout = OutputLayout::new(out);
    let mut corpus = load_train(config)?;
    join_feature_files(config, out, &mut corpus)?;
    let warm = warm_model(config, &corpus)?;
    let validation = load_validation_mixture(config)?;
    let objective = CurriculumObjective {
        corpus: &corpus,
        base: &warm,
        schedule: config.schedule.build(config.tuning.trial_steps)?,
        trainer: trainer_of(config),
        validation: &validation,
    };
    let bounds = crate::optimizer::Bounds::unit(&config.feature_names())?;
    let search = config.tuning.search_config(config.seed);

    let tune_dir = layout.tune_dir(method);
    std::fs::create_dir_all(&tune_dir)
        .map_err(|e| Error::io(tune_dir.display().to_string(), e))?;
    let trials_path = layout.trials_file(method);
    let save_each = |h: &TrialHistory| h.save(&trials_path);
    let history = match method {
        TuneMethod::Bayesian => {
            let previous = if resume && trials_path.exists() {
                TrialHistory::load(&trials_path)?
            } else {
                TrialHistory::new()
            };
            bayesopt(&objective, &bounds, &search, previous, save_each)?
        }
        TuneMethod::Random => random_search(&objective, &bounds, &search, save_each)?,
        TuneMethod::Uniform => {
            let weights = uniform_baseline(&bounds);
            let trial_seed = derive_seed(search.seed, "trial:0");
            let start = std::time::Instant::now();
            let p = objective.evaluate(&weights, trial_seed)?;
            let mut history = TrialHistory::new();
            history.push(Trial {
                index: 0,
                weights,
                p,
                seed: trial_seed,
                wall_secs: start.elapsed().as_secs_f64(),
            })?;
            history
        }
    };
    history.save(&trials_path)?;

    let best = history.best().expect("at least one trial ran").clone();
    let best_path = layout.best_file(method);
    write_file(&best_path, &format!("{}\n", best.to_json_line()))?;
    Ok(TuneOutcome {
        history,
        best,
        trials_path,
        best_path,
    })
}

/// How `train` should run.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Run name (directory under `runs/`).
    pub name: String,
    /// Weights file; all-ones when absent.
    pub weights: Option<PathBuf>,
    /// Keep the retained fraction at 1 (plain uniform training).
    pub no_curriculum: bool,
    /// Weight each sampled pair's loss instead of selecting a subset.
    pub loss_weighted: bool,
    /// Domains whose seed pairs fine-tune the final model afterwards.
    pub finetune: Vec<String>,
}

/// Provenance record saved beside each trained model.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunMeta {
    /// Run name.
    pub name: String,
    /// Seed the run trained under.
    pub seed: u64,
    /// Steps trained.
    pub steps: u64,
    /// `curriculum`, `uniform`, or `loss-weighted`.
    pub mode: String,
    /// Weights the corpus was scored with.
    pub weights: WeightVector,
    /// The decay actually used (absent for loss-weighted runs).
    pub schedule: Option<Schedule>,
}

/// Perplexity on one domain's validation set before and after post-training
/// fine-tuning on that domain's seed pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneEval {
    /// The domain fine-tuned on.
    pub domain: String,
    /// The final model's perplexity on the domain's validation set.
    pub final_perplexity: f64,
    /// The fine-tuned model's perplexity on the same set.
    pub finetuned_perplexity: f64,
}

/// What `train` produced.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    /// The run's directory.
    pub run_dir: PathBuf,
    /// Provenance as persisted.
    pub meta: RunMeta,
    /// Training loss at the final step.
    pub final_loss: f64,
    /// Per-domain perplexity rows for each fine-tuned model written.
    pub finetuned: Vec<FinetuneEval>,
}

fn check_run_name(name: &str) -> Result<()> {
    if name.is_empty()
        || name
            .chars()
            .any(|c| c.is_whitespace() || c == '/' || c == '\\' || c == '.')
    {
        return Err(Error::invalid(format!(
            "run name '{name}' must be non-empty and path-safe"
        )));
    }
    Ok(())
}

/// Train a final model from scratch on the scored corpus and persist the
/// model, step log, and provenance under `runs/<name>/`.
pub fn cmd_train(
    config: &ExperimentConfig,
    out: &Path,
    options: &TrainOptions,
) -> Result<TrainSummary> {
    check_run_name(&options.name)?;
    if options.no_curriculum && options.loss_weighted {
        return Err(Error::invalid(
            "a run cannot be both uniform (no curriculum) and loss-weighted",
        ));
    }
    let layout = OutputLayout::new(out);
    let mut corpus = load_train(config)?;
    join_feature_files(config, out, &mut corpus)?;
    let v = weights_or_uniform(config, options.weights.as_deref())?;
    corpus.score_with(&v)?;

    let steps = config.training.final_steps;
    let seed = config.seed;
    let trainer = trainer_of(config);
    let base = ToyTranslationModel::from_pairs(corpus.pairs())?;

    let (outcome, mode, schedule) = if options.loss_weighted {
        let outcome = trainer.run_loss_weighted(&base, &corpus, steps, seed)?;
        (outcome, "loss-weighted", None)
    } else if options.no_curriculum {
        let schedule = Schedule::constant(steps);
        let outcome = trainer.run_curriculum(&base, &corpus, &schedule, seed)?;
        (outcome, "uniform", Some(schedule))
    } else {
        let schedule = config.schedule.build(steps)?;
        let outcome = trainer.run_curriculum(&base, &corpus, &schedule, seed)?;
        (outcome, "curriculum", Some(schedule))
    };

    let run_dir = layout.run_dir(&options.name);
    std::fs::create_dir_all(&run_dir)
        .map_err(|e| Error::io(run_dir.display().to_string(), e))?;
    outcome.model.save(layout.model_file(&options.name))?;
    write_file(
        &layout.log_file(&options.name),
        &render_log(&outcome.log),
    )?;

    let meta = RunMeta {
        name: options.name.clone(),
        seed,
        steps,
        mode: mode.to_owned(),
        weights: v,
        schedule,
    };
    let meta_json = serde_json::to_string_pretty(&meta)
        .expect("run metadata serialization cannot fail");
    write_file(&layout.run_meta_file(&options.name), &format!("{meta_json}\n"))?;

    let mut finetuned = Vec::new();
    for domain in &options.finetune {
        let path = config.seeds.get(domain).ok_or_else(|| {
            Error::invalid(format!("no seed corpus configured for domain '{domain}'"))
        })?;
        let seed_pairs = load_pairs(config, path)?;
        let tuned = outcome.model.finetune(
            &seed_pairs,
            config.training.finetune_learning_rate,
            config.training.finetune_steps as usize,
        );
        tuned.save(layout.finetuned_model_file(&options.name, domain))?;
        let vpath = config.validation.get(domain).ok_or_else(|| {
            Error::invalid(format!("no validation set configured for domain '{domain}'"))
        })?;
        let vpairs = load_pairs(config, vpath)?;
        finetuned.push(FinetuneEval {
            domain: domain.clone(),
            final_perplexity: outcome.model.perplexity(&vpairs),
            finetuned_perplexity: tuned.perplexity(&vpairs),
        });
    }

    let final_loss = outcome.log.last().map(|r| r.train_loss).unwrap_or(f64::NAN);
    Ok(TrainSummary {
        run_dir,
        meta,
        final_loss,
        finetuned,
    })
}

fn render_log(log: &[StepRecord]) -> String {
    let mut text = String::from("step\trho\tn_selected\tbatch_mean_f\ttrain_loss\n");
    for r in log {
        writeln!(
            text,
            "{}\t{}\t{}\t{}\t{}",
            r.step, r.rho, r.n_selected, r.batch_mean_f, r.train_loss
        )
        .expect("string write cannot fail");
    }
    text
}

/// One evaluated (model, validation set) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    /// `final`, or `finetuned:<domain>`.
    pub model: String,
    /// A domain name, or `mixed`.
    pub set: String,
    /// Per-target-token perplexity.
    pub perplexity: f64,
}

/// Evaluate a run's models on every validation set plus the mixture, and
/// write the run's `eval.tsv`.
pub fn cmd_eval(
    config: &ExperimentConfig,
    out: &Path,
    run: &str,
) -> Result<(PathBuf, Vec<EvalRow>)> {
    check_run_name(run)?;
    let layout = OutputLayout::new(out);
    let sets = load_validation_sets(config)?;
    let mixed = mix_validation(&sets, &config.mix, config.seed)?;

    let mut models: Vec<(String, ToyTranslationModel)> = vec![(
        "final".to_owned(),
        ToyTranslationModel::load(layout.model_file(run))?,
    )];
    let mut domains: Vec<String> = config.seeds.keys().cloned().collect();
    domains.sort();
    for domain in domains {
        let path = layout.finetuned_model_file(run, &domain);
        if path.exists() {
            models.push((format!("finetuned:{domain}"), ToyTranslationModel::load(path)?));
        }
    }

    let mut rows = Vec::new();
    for (label, model) in &models {
        for (set, pairs) in &sets {
            rows.push(EvalRow {
                model: label.clone(),
                set: set.clone(),
                perplexity: model.perplexity(pairs),
            });
        }
        rows.push(EvalRow {
            model: label.clone(),
            set: "mixed".to_owned(),
            perplexity: model.perplexity(&mixed),
        });
    }

    let mut text = String::from("model\tset\tperplexity\n");
    for r in &rows {
        writeln!(text, "{}\t{}\t{}", r.model, r.set, r.perplexity)
            .expect("string write cannot fail");
    }
    let path = layout.eval_file(run);
    write_file(&path, &text)?;
    Ok((path, rows))
}

/// One run's line in the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// Run name.
    pub run: String,
    /// Whether the run had evaluation output.
    pub present: bool,
    /// Final-model perplexity per validation set.
    pub per_set: BTreeMap<String, f64>,
    /// Final-model perplexity on the mixture.
    pub mixed: Option<f64>,
    /// Row mean of the per-set perplexities.
    pub avg: Option<f64>,
}

/// The full report.
#[derive(Debug)]
pub struct Report {
    /// Validation set names, in column order.
    pub sets: Vec<String>,
    /// One row per requested run.
    pub rows: Vec<ReportRow>,
    /// Selection-composition table at [`BALANCE_THRESHOLDS`].
    pub balance: Vec<BalanceRow>,
    /// Where the comparison table went.
    pub report_path: PathBuf,
    /// Where the composition table went.
    pub balance_path: PathBuf,
    /// Runs that were requested but had no evaluation output.
    pub warnings: Vec<String>,
}

fn parse_eval_file(path: &Path) -> Result<Vec<EvalRow>> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&shown, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(model), Some(set), Some(ppl), None) => {
                let perplexity: f64 = ppl.parse().map_err(|_| Error::Parse {
                    path: shown.clone(),
                    line: i + 1,
                    message: format!("bad perplexity '{ppl}'"),
                })?;
                rows.push(EvalRow {
                    model: model.to_owned(),
                    set: set.to_owned(),
                    perplexity,
                });
            }
            _ => {
                return Err(Error::Parse {
                    path: shown,
                    line: i + 1,
                    message: "expected model<TAB>set<TAB>perplexity".into(),
                })
            }
        }
    }
    Ok(rows)
}

fn discover_runs(layout: &OutputLayout) -> Result<Vec<String>> {
    let dir = layout.runs_dir();
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        if entry.path().is_dir() {
            if let Some(name) = entry.file_name().to_str() {
                names.push(name.to_owned());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Ratings aligned to corpus order, when the config points at a ratings
/// file.
fn load_ratings(
    config: &ExperimentConfig,
    corpus: &ScoredCorpus,
) -> Result<Option<Vec<f64>>> {
    let Some(path) = &config.ratings else {
        return Ok(None);
    };
    let mut scratch = ScoredCorpus::from_pairs(corpus.pairs().to_vec())?;
    scratch.join_external_features(path, Some("rating"))?;
    Ok(Some(
        scratch.feature_column("rating").expect("just joined").to_vec(),
    ))
}

/// Build the cross-run comparison table (`report.tsv`) and the
/// selection-composition table (`balance.tsv`).
///
/// Runs default to every directory under `runs/`. A requested run without
/// evaluation output gets an `absent` row and a warning instead of an
/// error. The composition table scores the corpus with the Bayesian
/// search's best weights when `tune/bo/best.json` exists, all-ones
/// otherwise.
pub fn cmd_report(
    config: &ExperimentConfig,
    out: &Path,
    runs: Option<&[String]>,
) -> Result<Report> {
    let layout = OutputLayout::new(out);
    let run_names = match runs {
        Some(r) => r.to_vec(),
        None => discover_runs(&layout)?,
    };
    let sets: Vec<String> = config.validation.keys().cloned().collect();

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for run in &run_names {
        let eval_path = layout.eval_file(run);
        if !eval_path.exists() {
            warnings.push(format!("run '{run}' has no evaluation output; row marked absent"));
            rows.push(ReportRow {
                run: run.clone(),
                present: false,
                per_set: BTreeMap::new(),
                mixed: None,
                avg: None,
            });
            continue;
        }
        let eval_rows = parse_eval_file(&eval_path)?;
        let mut per_set = BTreeMap::new();
        let mut mixed = None;
        for row in eval_rows.iter().filter(|r| r.model == "final") {
            if row.set == "mixed" {
                mixed = Some(row.perplexity);
            } else {
                per_set.insert(row.set.clone(), row.perplexity);
            }
        }
        let avg = if sets.iter().all(|s| per_set.contains_key(s)) && !sets.is_empty() {
            Some(sets.iter().map(|s| per_set[s]).sum::<f64>() / sets.len() as f64)
        } else {
            None
        };
        rows.push(ReportRow {
            run: run.clone(),
            present: true,
            per_set,
            mixed,
            avg,
        });
    }

    let mut text = String::from("run");
    for s in &sets {
        write!(text, "\t{s}").expect("string write cannot fail");
    }
    text.push_str("\tmixed\tavg\n");
    let cell = |v: Option<f64>| match v {
        Some(x) => x.to_string(),
        None => "absent".to_owned(),
    };
    for row in &rows {
        write!(text, "{}", row.run).expect("string write cannot fail");
        for s in &sets {
            write!(text, "\t{}", cell(row.per_set.get(s).copied()))
                .expect("string write cannot fail");
        }
        writeln!(text, "\t{}\t{}", cell(row.mixed), cell(row.avg))
            .expect("string write cannot fail");
    }
    write_file(&layout.report_file(), &text)?;

    // Composition of the selection under the best (or uniform) weights.
    let mut corpus = load_train(config)?;
    join_feature_files(config, out, &mut corpus)?;
    let best_path = layout.best_file(TuneMethod::Bayesian);
    let weights = if best_path.exists() {
        load_weights(&best_path)?
    } else {
        WeightVector::constant(&config.feature_names(), 1.0)?
    };
    corpus.score_with(&weights)?;
    let ratings = load_ratings(config, &corpus)?;
    let balance = dynamic_balance_report(&corpus, &BALANCE_THRESHOLDS, ratings.as_deref())?;

    let feature_names = config.feature_names();
    let mut btext = String::from("threshold\tcount\tmean_f");
    for name in &feature_names {
        write!(btext, "\tmean_{name}").expect("string write cannot fail");
    }
    if ratings.is_some() {
        btext.push_str("\tmean_rating");
    }
    btext.push('\n');
    for row in &balance {
        write!(btext, "{}\t{}\t{}", row.threshold, row.count, cell(row.mean_f))
            .expect("string write cannot fail");
        for name in &feature_names {
            write!(
                btext,
                "\t{}",
                cell(row.feature_means.get(name).copied())
            )
            .expect("string write cannot fail");
        }
        if ratings.is_some() {
            write!(btext, "\t{}", cell(row.mean_rating)).expect("string write cannot fail");
        }
        btext.push('\n');
    }
    write_file(&layout.balance_file(), &btext)?;

    Ok(Report {
        sets,
        rows,
        balance,
        report_path: layout.report_file(),
        balance_path: layout.balance_file(),
        warnings,
    })
}
