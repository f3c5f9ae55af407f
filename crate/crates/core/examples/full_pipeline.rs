//! Every pipeline stage end to end in one process: generate a synthetic
//! world, score features, normalize, tune weights with a small budget,
//! train baseline and curriculum runs, evaluate, and report.
//!
//! Usage: `cargo run --example full_pipeline -- [DIR]`
//! (default: a temporary directory, removed afterwards)

use std::path::PathBuf;

use curricula::config::synth_layout_config;
use curricula::pipeline::{
    cmd_eval, cmd_normalize, cmd_report, cmd_score, cmd_train, cmd_tune, TrainOptions,
    TuneMethod,
};
use curricula::synth::{generate, SynthConfig};

fn main() -> curricula::Result<()> {
    let arg_dir = std::env::args().nth(1).map(PathBuf::from);
    let tmp;
    let dir = match &arg_dir {
        Some(d) => d.clone(),
        None => {
            tmp = tempfile::tempdir().expect("create temp dir");
            tmp.path().to_path_buf()
        }
    };

    let synth = SynthConfig {
        seed: 3,
        train_per_domain: 150,
        noise_fraction: 0.3,
        ..SynthConfig::default()
    };
    println!("generating a 2-domain world under {}", dir.display());
    generate(&synth)?.write_to(&dir)?;
    let mut config = synth_layout_config(&dir, &synth.domains, 3);
    config.tuning.trials = 6;
    config.tuning.explore = 4;
    config.tuning.trial_steps = 150;
    config.training.final_steps = 600;
    config.validate()?;
    let out = config.output_root();

    println!("scoring features...");
    let written = cmd_score(&config, &out, &[], None)?;
    println!("  {} columns", written.len());

    println!("normalizing...");
    let norm = cmd_normalize(&config, &out, None)?;
    println!("  {} pairs -> {}", norm.pairs, norm.scores_path.display());

    println!("tuning weights ({} short trials)...", config.tuning.trials);
    let tune = cmd_tune(&config, &out, TuneMethod::Bayesian, false)?;
    println!("  best p = {:.5}", tune.best.p);

    println!("training baseline and curriculum runs...");
    cmd_train(
        &config,
        &out,
        &TrainOptions {
            name: "baseline".into(),
            no_curriculum: true,
            ..TrainOptions::default()
        },
    )?;
    cmd_train(
        &config,
        &out,
        &TrainOptions {
            name: "multi".into(),
            weights: Some(tune.best_path.clone()),
            ..TrainOptions::default()
        },
    )?;

    println!("evaluating...");
    cmd_eval(&config, &out, "baseline")?;
    cmd_eval(&config, &out, "multi")?;

    let report = cmd_report(&config, &out, None)?;
    println!();
    print!("run        ");
    for s in &report.sets {
        print!("  {s:>9}");
    }
    println!("  {:>9}  {:>9}", "mixed", "avg");
    for row in &report.rows {
        print!("{:<11}", row.run);
        for s in &report.sets {
            print!("  {:>9.4}", row.per_set[s]);
        }
        println!(
            "  {:>9.4}  {:>9.4}",
            row.mixed.unwrap(),
            row.avg.unwrap()
        );
    }
    println!();
    println!("full artifact tree under {}", out.display());
    Ok(())
}
