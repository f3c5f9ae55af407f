//! The weight search on an analytic objective with a known optimum at
//! (0.3, 0.7): Bayesian optimization against plain random search.
//!
//! Usage: `cargo run --example bayesopt_quadratic`

use curricula::corpus::WeightVector;
use curricula::optimizer::{
    bayesopt, random_search, Bounds, Objective, SearchConfig, TrialHistory,
};
use curricula::Result;

struct Quadratic;

impl Objective for Quadratic {
    fn evaluate(&self, weights: &WeightVector, _seed: u64) -> Result<f64> {
        let v1 = weights.get("v1").unwrap();
        let v2 = weights.get("v2").unwrap();
        Ok(-(v1 - 0.3).powi(2) - (v2 - 0.7).powi(2))
    }
}

fn main() -> Result<()> {
    let bounds = Bounds::unit(&["v1", "v2"])?;
    let config = SearchConfig {
        trials: 30,
        explore: 25,
        seed: 17,
    };

    let bo = bayesopt(&Quadratic, &bounds, &config, TrialHistory::new(), |_| Ok(()))?;
    let rs = random_search(&Quadratic, &bounds, &config, |_| Ok(()))?;

    println!("true optimum: v1 = 0.3, v2 = 0.7, value 0");
    println!();
    println!("{:>5}  {:>8}  {:>8}  {:>10}", "trial", "v1", "v2", "value");
    for t in bo.trials() {
        println!(
            "{:>5}  {:>8.4}  {:>8.4}  {:>10.6}",
            t.index,
            t.weights.get("v1").unwrap(),
            t.weights.get("v2").unwrap(),
            t.p
        );
    }

    let best_bo = bo.best().expect("trials ran");
    let best_rs = rs.best().expect("trials ran");
    println!();
    println!(
        "bayesopt best:      value {:.6} at ({:.4}, {:.4})",
        best_bo.p,
        best_bo.weights.get("v1").unwrap(),
        best_bo.weights.get("v2").unwrap()
    );
    println!(
        "random-search best: value {:.6} at ({:.4}, {:.4})",
        best_rs.p,
        best_rs.weights.get("v1").unwrap(),
        best_rs.weights.get("v2").unwrap()
    );
    Ok(())
}
