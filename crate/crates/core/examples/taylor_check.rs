//! Why one fine-tuning step measures domain fit: the exact score change of
//! a pair after one ascent step on a seed corpus equals the step size times
//! the gradient inner product, up to an error that shrinks quadratically.
//!
//! Usage: `cargo run --example taylor_check`

use curricula::corpus::SentencePair;
use curricula::translation::{taylor_check, ToyTranslationModel};

fn main() -> curricula::Result<()> {
    let pairs = vec![
        SentencePair::from_text(0, "der hund läuft schnell", "the dog runs fast")?,
        SentencePair::from_text(1, "die katze schläft gern", "the cat sleeps gladly")?,
        SentencePair::from_text(2, "der hund schläft", "the dog sleeps")?,
        SentencePair::from_text(3, "die katze läuft", "the cat runs")?,
    ];
    let model = ToyTranslationModel::from_pairs(&pairs)?;
    let probe = &pairs[0];
    let seed = &pairs[1..];

    println!("{:>10}  {:>13}  {:>13}  {:>10}", "lambda", "exact", "first-order", "abs err");
    let mut points = Vec::new();
    let mut lambda = 1e-2;
    while lambda > 1.2e-3 {
        let c = taylor_check(probe, &model, seed, lambda);
        println!("{lambda:>10.5}  {:>13.9}  {:>13.9}  {:>10.3e}", c.lhs, c.rhs, c.abs_err);
        points.push((lambda.ln(), c.abs_err.ln()));
        lambda /= 2.0;
    }

    // Least-squares slope of ln(err) against ln(lambda): ~2 for a
    // quadratic remainder.
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    println!();
    println!("log-log slope of the error: {slope:.3} (quadratic decay = 2)");

    let fine = taylor_check(probe, &model, seed, 1e-3);
    println!(
        "at lambda = 1e-3 the first-order term is off by {:.4}%",
        100.0 * fine.abs_err / fine.lhs.abs()
    );
    Ok(())
}
