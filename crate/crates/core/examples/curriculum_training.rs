//! Curriculum vs uniform training on a noisy synthetic corpus: scoring the
//! pairs, decaying the retained fraction, and comparing validation
//! perplexity on the domain mixture.
//!
//! Usage: `cargo run --example curriculum_training`

use curricula::corpus::{ScoredCorpus, WeightVector};
use curricula::curriculum::{Schedule, Trainer};
use curricula::optimizer::mix_validation;
use curricula::synth::{generate, SynthConfig};
use curricula::translation::{multi_domain_model, nmt_domain_feature, ToyTranslationModel};

fn main() -> curricula::Result<()> {
    let synth = SynthConfig {
        seed: 5,
        train_per_domain: 400,
        noise_fraction: 0.3,
        ..SynthConfig::default()
    };
    let world = generate(&synth)?;
    println!(
        "{} training pairs, {:.0}% with shuffled targets",
        world.train.len(),
        100.0 * synth.noise_fraction
    );

    // One translation-quality feature: score change under a model adapted
    // to all domain seeds at once.
    let base = ToyTranslationModel::from_pairs(&world.train)?;
    let seeds: Vec<&[curricula::corpus::SentencePair]> =
        world.seeds.values().map(|v| v.as_slice()).collect();
    let adapted = multi_domain_model(&base, &seeds, 1e-2, 10)?;
    let mut corpus = ScoredCorpus::from_pairs(world.train.clone())?;
    let quality: Vec<f64> = world
        .train
        .iter()
        .map(|p| nmt_domain_feature(p, &base, &adapted))
        .collect::<curricula::Result<_>>()?;
    corpus.add_feature("quality", quality)?;
    corpus.score_with(&WeightVector::constant(&["quality"], 1.0)?)?;

    let steps = 1500;
    let trainer = Trainer {
        learning_rate: 0.05,
        batch_size: 8,
    };
    let schedule = Schedule::reaching(0.25, 1000, 0, steps)?;
    let curriculum = trainer.run_curriculum(&base, &corpus, &schedule, 42)?;
    let uniform = trainer.run_curriculum(&base, &corpus, &Schedule::constant(steps), 42)?;

    let mixture = mix_validation(
        &world.validation,
        &world
            .validation
            .keys()
            .map(|k| (k.clone(), 1.0 / world.validation.len() as f64))
            .collect(),
        5,
    )?;
    println!();
    println!(
        "selection at the end: {} of {} pairs (rho = {:.3})",
        curriculum.log.last().unwrap().n_selected,
        corpus.len(),
        curriculum.log.last().unwrap().rho
    );
    println!();
    println!(
        "uniform training    mixed-validation perplexity: {:.4}",
        uniform.model.perplexity(&mixture)
    );
    println!(
        "curriculum training mixed-validation perplexity: {:.4}",
        curriculum.model.perplexity(&mixture)
    );
    Ok(())
}
