//! Score a small synthetic corpus with every feature kind and show the
//! per-pair columns next to the ground truth labels.
//!
//! Usage: `cargo run --example feature_scores`

use curricula::config::synth_layout_config;
use curricula::pipeline::{compute_features, load_train, select_features};
use curricula::synth::{generate, SynthConfig};

fn main() -> curricula::Result<()> {
    let dir = tempfile::tempdir().expect("create temp dir");
    let synth = SynthConfig {
        seed: 21,
        train_per_domain: 120,
        ..SynthConfig::default()
    };
    let world = generate(&synth)?;
    world.write_to(dir.path())?;
    let config = synth_layout_config(dir.path(), &synth.domains, 21);

    let corpus = load_train(&config)?;
    let specs = select_features(&config, &[])?;
    let columns = compute_features(&config, &corpus, &specs, None)?;

    print!("{:>4}  {:<7} {:<5}", "id", "domain", "noisy");
    for (name, _) in &columns {
        print!("  {name:>9}");
    }
    println!();
    for (pos, label) in world.labels.iter().enumerate().take(12) {
        print!(
            "{:>4}  {:<7} {:<5}",
            world.train[pos].id, label.domain, label.noisy
        );
        for (_, values) in &columns {
            print!("  {:>9.4}", values[pos]);
        }
        println!();
    }

    // Each domain-relevance feature should prefer its own domain, and the
    // translation-quality features should prefer clean pairs.
    println!();
    for (name, values) in &columns {
        let mean = |keep: &dyn Fn(usize) -> bool| {
            let picked: Vec<f64> = (0..values.len()).filter(|&i| keep(i)).map(|i| values[i]).collect();
            picked.iter().sum::<f64>() / picked.len() as f64
        };
        let clean = mean(&|i| !world.labels[i].noisy);
        let noisy = mean(&|i| world.labels[i].noisy);
        let legal = mean(&|i| world.labels[i].domain == "legal");
        let medical = mean(&|i| world.labels[i].domain == "medical");
        println!(
            "{name:>9}: mean clean {clean:>8.4}  noisy {noisy:>8.4}  legal {legal:>8.4}  medical {medical:>8.4}"
        );
    }
    Ok(())
}
