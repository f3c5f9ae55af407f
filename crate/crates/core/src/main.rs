//! Thin command-line front end over [`curricula::pipeline`].
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use curricula::config::ExperimentConfig;
use curricula::error::{Error, Result};
use curricula::pipeline::{
    self, resolve_output, Report, TrainOptions, TuneMethod, OUTPUT_ENV,
};

#[derive(Parser)]
#[command(
    name = "curricula",
    version,
    about = "Learned data-selection curricula for multi-domain parallel-corpus training",
    after_help = format!(
        "The output root is --out, else ${OUTPUT_ENV}, else the config's `output` field."
    )
)]
struct Cli {
    /// Experiment configuration file (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output root for all artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the config's top-level seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-pair feature values; one column file per feature.
    Score {
        /// Only these features, each "NAME" or "KIND:NAME"; repeatable.
        #[arg(long = "feature", value_name = "SELECTOR")]
        features: Vec<String>,

        /// Fixed base translation model for the translation-quality
        /// features (default: trained on the training corpus).
        #[arg(long, value_name = "FILE")]
        base_model: Option<PathBuf>,
    },

    /// Aggregate feature columns into scores and percentile-normalize.
    Normalize {
        /// Feature weights file (default: all ones).
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
    },

    /// Search feature weights by short fine-tuning trials.
    Tune {
        /// Search method: bo, rs, or uniform.
        #[arg(long, default_value = "bo", value_name = "METHOD")]
        method: String,

        /// Override the trial budget.
        #[arg(long, value_name = "N")]
        trials: Option<usize>,

        /// Override how many initial trials explore.
        #[arg(long, value_name = "N")]
        explore: Option<usize>,

        /// Override the training steps per trial.
        #[arg(long, value_name = "N")]
        trial_steps: Option<u64>,

        /// Override validation mixing ratios, e.g. news=0.5,ted=0.5.
        #[arg(long, value_name = "NAME=RATIO,...")]
        mix: Option<String>,

        /// Continue an interrupted trial history instead of restarting.
        #[arg(long)]
        resume: bool,
    },

    /// Train a final model from scratch on the scored corpus.
    Train {
        /// Run name; artifacts land under runs/NAME/.
        #[arg(long, value_name = "NAME")]
        name: String,

        /// Feature weights file (default: all ones).
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,

        /// Keep every pair eligible throughout (no selection).
        #[arg(long)]
        no_curriculum: bool,

        /// Weight each pair's loss by its score instead of selecting.
        #[arg(long)]
        loss_weighted: bool,

        /// Override the selection decay, e.g. H=861.35,floor=0.2,warmup=0.
        #[arg(long, value_name = "K=V,...")]
        schedule: Option<String>,

        /// Override the number of training steps.
        #[arg(long, value_name = "N")]
        steps: Option<u64>,

        /// Fine-tune the final model on a domain's seed pairs afterwards,
        /// as seed=DOMAIN; repeatable.
        #[arg(long = "finetune", value_name = "seed=DOMAIN")]
        finetune: Vec<String>,
    },

    /// Evaluate a run's models on every validation set and the mixture.
    Eval {
        /// Run name under runs/.
        #[arg(long, value_name = "NAME")]
        run: String,
    },

    /// Build the cross-run comparison and selection-composition tables.
    Report {
        /// Runs to include; repeatable (default: every run found).
        #[arg(long = "run", value_name = "NAME")]
        runs: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::invalid("the --config flag is required"))?;
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = resolve_output(&config, cli.out.as_deref());

    match cli.command {
        Command::Score {
            features,
            base_model,
        } => {
            let written = pipeline::cmd_score(&config, &out, &features, base_model.as_deref())?;
            println!("wrote {} feature column(s):", written.len());
            for (name, path) in &written {
                println!("  {name}\t{}", path.display());
            }
        }

        Command::Normalize { weights } => {
            let outcome = pipeline::cmd_normalize(&config, &out, weights.as_deref())?;
            println!(
                "scored {} pairs with weights {}",
                outcome.pairs,
                render_weights(&outcome.weights)
            );
            println!("wrote {}", outcome.scores_path.display());
        }

        Command::Tune {
            method,
            trials,
            explore,
            trial_steps,
            mix,
            resume,
        } => {
            let method: TuneMethod = method.parse()?;
            if let Some(t) = trials {
                config.tuning.trials = t;
            }
            if let Some(e) = explore {
                config.tuning.explore = e;
            }
            if let Some(s) = trial_steps {
                config.tuning.trial_steps = s;
            }
            if let Some(spec) = &mix {
                config.mix = parse_mix(spec)?;
            }
            config.validate()?;
            let outcome = pipeline::cmd_tune(&config, &out, method, resume)?;
            println!(
                "{} finished {} trial(s); best p = {} at {}",
                method.name(),
                outcome.history.len(),
                outcome.best.p,
                render_weights(&outcome.best.weights)
            );
            println!("wrote {}", outcome.trials_path.display());
            println!("wrote {}", outcome.best_path.display());
        }

        Command::Train {
            name,
            weights,
            no_curriculum,
            loss_weighted,
            schedule,
            steps,
            finetune,
        } => {
            if let Some(spec) = &schedule {
                apply_schedule_overrides(&mut config, spec)?;
            }
            if let Some(s) = steps {
                config.training.final_steps = s;
            }
            config.validate()?;
            let options = TrainOptions {
                name,
                weights,
                no_curriculum,
                loss_weighted,
                finetune: parse_finetune(&finetune)?,
            };
            let summary = pipeline::cmd_train(&config, &out, &options)?;
            println!(
                "run '{}': {} mode, {} steps, final training loss {}",
                summary.meta.name, summary.meta.mode, summary.meta.steps, summary.final_loss
            );
            for row in &summary.finetuned {
                println!(
                    "finetuned:{}\tvalidation perplexity {} -> {}",
                    row.domain, row.final_perplexity, row.finetuned_perplexity
                );
            }
            println!("wrote {}", summary.run_dir.display());
        }

        Command::Eval { run } => {
            let (path, rows) = pipeline::cmd_eval(&config, &out, &run)?;
            for row in &rows {
                println!("{}\t{}\t{}", row.model, row.set, row.perplexity);
            }
            println!("wrote {}", path.display());
        }

        Command::Report { runs } => {
            let runs = if runs.is_empty() { None } else { Some(runs) };
            let report = pipeline::cmd_report(&config, &out, runs.as_deref())?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print_report(&report);
            println!("wrote {}", report.report_path.display());
            println!("wrote {}", report.balance_path.display());
        }
    }
    Ok(())
}

/// Parse `name=ratio,name=ratio` into mixing ratios.
fn parse_mix(spec: &str) -> Result<BTreeMap<String, f64>> {
    let mut mix = BTreeMap::new();
    for part in spec.split(',') {
        let (name, ratio) = part
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("mix entry '{part}' is not NAME=RATIO")))?;
        let ratio: f64 = ratio
            .parse()
            .map_err(|_| Error::invalid(format!("mix ratio '{ratio}' is not a number")))?;
        if mix.insert(name.to_owned(), ratio).is_some() {
            return Err(Error::invalid(format!("mix names '{name}' twice")));
        }
    }
    if mix.is_empty() {
        return Err(Error::invalid("mix must name at least one validation set"));
    }
    Ok(mix)
}

/// Apply `H=...,floor=...,warmup=...` to the config's schedule section.
fn apply_schedule_overrides(config: &mut ExperimentConfig, spec: &str) -> Result<()> {
    for part in spec.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("schedule entry '{part}' is not KEY=VALUE")))?;
        let parse_f64 = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| Error::invalid(format!("schedule {key} '{value}' is not a number")))
        };
        match key {
            "H" => {
                config.schedule.halving = Some(parse_f64()?);
                config.schedule.plateau_step = None;
            }
            "floor" => config.schedule.floor = parse_f64()?,
            "warmup" => {
                config.schedule.warmup = value.parse().map_err(|_| {
                    Error::invalid(format!("schedule warmup '{value}' is not an integer"))
                })?;
            }
            other => {
                return Err(Error::invalid(format!(
                    "unknown schedule key '{other}' (expected H, floor, or warmup)"
                )))
            }
        }
    }
    Ok(())
}

/// Parse repeated `seed=DOMAIN` selectors into domain names.
fn parse_finetune(selectors: &[String]) -> Result<Vec<String>> {
    selectors
        .iter()
        .map(|s| {
            s.strip_prefix("seed=")
                .map(str::to_owned)
                .ok_or_else(|| Error::invalid(format!("finetune '{s}' is not seed=DOMAIN")))
        })
        .collect()
}

fn render_weights(v: &curricula::corpus::WeightVector) -> String {
    let parts: Vec<String> = v
        .entries()
        .iter()
        .map(|(name, value)| format!("{name}={value}"))
        .collect();
    format!("{{{}}}", parts.join(", "))
}

/// Aligned human-readable comparison and composition tables.
fn print_report(report: &Report) {
    let mut header: Vec<String> = vec!["run".into()];
    header.extend(report.sets.iter().cloned());
    header.push("mixed".into());
    header.push("avg".into());
    let mut table: Vec<Vec<String>> = vec![header];
    let cell = |v: Option<f64>| match v {
        Some(x) => format!("{x:.4}"),
        None => "absent".to_owned(),
    };
    for row in &report.rows {
        let mut line = vec![row.run.clone()];
        for s in &report.sets {
            line.push(cell(row.per_set.get(s).copied()));
        }
        line.push(cell(row.mixed));
        line.push(cell(row.avg));
        table.push(line);
    }
    print_aligned(&table);

    println!();
    println!("selection composition by percentile threshold:");
    let mut feature_names: Vec<String> = Vec::new();
    if let Some(first) = report.balance.iter().find(|r| !r.feature_means.is_empty()) {
        feature_names = first.feature_means.keys().cloned().collect();
    }
    let mut header: Vec<String> = vec!["threshold".into(), "count".into(), "mean_f".into()];
    header.extend(feature_names.iter().map(|n| format!("mean_{n}")));
    let has_ratings = report.balance.iter().any(|r| r.mean_rating.is_some());
    if has_ratings {
        header.push("mean_rating".into());
    }
    let mut table = vec![header];
    for row in &report.balance {
        let mut line = vec![
            format!("{:.2}", row.threshold),
            row.count.to_string(),
            cell(row.mean_f),
        ];
        for name in &feature_names {
            line.push(cell(row.feature_means.get(name).copied()));
        }
        if has_ratings {
            line.push(cell(row.mean_rating));
        }
        table.push(line);
    }
    print_aligned(&table);
}

fn print_aligned(table: &[Vec<String>]) {
    let columns = table.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; columns];
    for row in table {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    for row in table {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(&format!("{:<width$}", cell, width = widths[i]));
        }
        println!("{}", line.trim_end());
    }
}
