//! Write a synthetic two-domain parallel corpus to disk, plus an
//! experiment config wired to it — everything the CLI needs to run.
//!
//! Usage: `cargo run --example generate_corpus -- [DIR] [SEED]`
//! (default: ./synth-world, seed 7)

use std::path::PathBuf;

use curricula::config::synth_layout_config;
use curricula::synth::{generate, SynthConfig};

fn main() -> curricula::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synth-world".into()));
    let seed: u64 = args
        .next()
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(7);

    let synth = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let world = generate(&synth)?;
    world.write_to(&dir)?;

    let config = synth_layout_config(&dir, &synth.domains, seed);
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, config.to_json_string()).expect("write config");

    let noisy = world.labels.iter().filter(|l| l.noisy).count();
    println!(
        "wrote {} training pairs ({} noisy) across {} domains to {}",
        world.train.len(),
        noisy,
        synth.domains.len(),
        dir.display()
    );
    println!("config: {}", config_path.display());
    println!();
    println!("try:");
    println!("  curricula score     --config {}", config_path.display());
    println!("  curricula normalize --config {}", config_path.display());
    println!(
        "  curricula tune      --config {} --method rs --trials 5 --explore 5 --trial-steps 200",
        config_path.display()
    );
    Ok(())
}
