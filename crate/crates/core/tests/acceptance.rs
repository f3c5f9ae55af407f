//! The acceptance gate: ten checks covering the schedule, selection,
//! gradients, the first-order score approximation, the surrogate, the
//! optimizer, the end-to-end two-domain experiment, loss weighting, the
//! composition report, and determinism. Each prints one pass/fail line
//! (run with `--nocapture` to watch them as they finish).

use std::collections::{BTreeMap, BTreeSet};
use std::panic::AssertUnwindSafe;
use std::path::Path;
use std::time::{Duration, Instant};

use curricula::config::{synth_layout_config, ExperimentConfig, FeatureSpec};
use curricula::corpus::{ScoredCorpus, SentencePair, WeightVector};
use curricula::curriculum::{
    dynamic_balance_report, select, selection_weights, Schedule, Trainer,
};
use curricula::optimizer::gp::JITTER;
use curricula::optimizer::{
    bayesopt, ei, mix_validation, random_search, Bounds, CurriculumObjective, GpSurrogate,
    Objective, SearchConfig, TrialHistory,
};
use curricula::pipeline::{compute_features, load_train, warm_model};
use curricula::rng::{derive_seed, seeded_rng};
use curricula::synth::{generate, SynthConfig};
use curricula::translation::{taylor_check, ToyTranslationModel};
use rand::seq::SliceRandom;
use rand::Rng;

type Check = Result<String, String>;

fn fail(msg: impl Into<String>) -> Check {
    Err(msg.into())
}

/// Run one criterion, catching panics, enforcing its runtime budget, and
/// printing its line.
fn run_criterion(
    name: &str,
    budget: Duration,
    failures: &mut Vec<String>,
    body: impl FnOnce() -> Check,
) {
    let start = Instant::now();
    let result = std::panic::catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "opaque panic".into());
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let result = match result {
        Ok(detail) if elapsed > budget => Err(format!(
            "passed but took {elapsed:.1?}, over the {budget:.0?} budget ({detail})"
        )),
        other => other,
    };
    match result {
        Ok(detail) => println!("PASS  {name} [{elapsed:.1?}]: {detail}"),
        Err(detail) => {
            println!("FAIL  {name} [{elapsed:.1?}]: {detail}");
            failures.push(name.to_string());
        }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------------------
// 1. Schedule exactness.

fn criterion_schedule() -> Check {
    // Warmup boundary and one-halving point, on an explicit decay.
    let s = Schedule::new(700.0, 0.1, 100, 1000).map_err(|e| e.to_string())?;
    if s.rho(0) != 1.0 || s.rho(99) != 1.0 || s.rho(100) != 1.0 {
        return fail(format!(
            "retained fraction during warmup must be exactly 1, got rho(100) = {}",
            s.rho(100)
        ));
    }
    let at_halving = s.rho(800);
    if (at_halving - 0.5).abs() > 1e-12 {
        return fail(format!(
            "one halving period after warmup must give 0.5 +/- 1e-12, got {at_halving}"
        ));
    }

    // The decay tuned to reach its 20% floor exactly at step 2000.
    let h = 2000.0 * std::f64::consts::LN_2 / 5.0f64.ln();
    let plateau = Schedule::new(h, 0.2, 0, 200_000).map_err(|e| e.to_string())?;
    for t in 1995..2000 {
        if plateau.rho(t) <= 0.2 {
            return fail(format!("rho({t}) = {} reached the floor early", plateau.rho(t)));
        }
    }
    for t in (2000u64..100_000).chain([1_000_000, 1_000_000_000]) {
        if plateau.rho(t) != 0.2 {
            return fail(format!("rho({t}) = {} instead of exactly 0.2", plateau.rho(t)));
        }
    }
    Ok(format!(
        "warmup holds 1, rho(warmup+H) = {at_halving}, floor 0.2 exact from step 2000 on (H = {h:.4})"
    ))
}

// ---------------------------------------------------------------------------
// 2. Selection equals brute force; weights form a PMF.

fn criterion_selection() -> Check {
    let mut rng = seeded_rng(7002, "acceptance-selection");
    for case in 0..1000 {
        let n = rng.random_range(1..=200usize);
        // Shuffled ids (ids != positions) and heavily tied scores, so the
        // (score, id) tie-break is really exercised.
        let mut ids: Vec<u64> = (0..n as u64).collect();
        ids.shuffle(&mut rng);
        let pairs: Vec<SentencePair> = ids
            .iter()
            .map(|&id| SentencePair::from_text(id, "x", "y").unwrap())
            .collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0..=10) as f64 / 10.0).collect();
        let mut corpus = ScoredCorpus::from_pairs(pairs).map_err(|e| e.to_string())?;
        corpus.add_feature("v", values.clone()).map_err(|e| e.to_string())?;
        corpus
            .score_with(&WeightVector::constant(&["v"], 1.0).unwrap())
            .map_err(|e| e.to_string())?;

        // A schedule whose decay lands on an arbitrary fraction at step 1.
        let target: f64 = rng.random_range(0.005..=1.0);
        let schedule = if target >= 1.0 {
            Schedule::constant(2)
        } else {
            Schedule::new(-1.0 / target.log2(), 1e-9, 0, 2).unwrap()
        };
        let sel = select(&corpus, &schedule, 1).map_err(|e| e.to_string())?;

        let m_expected = ((sel.rho * n as f64).ceil() as usize).clamp(1, n);
        if sel.n_selected != m_expected {
            return fail(format!(
                "case {case}: kept {} of {n} at rho {}, expected ceil = {m_expected}",
                sel.n_selected, sel.rho
            ));
        }

        // Brute force: order by (score, id), keep the top m.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            values[a]
                .total_cmp(&values[b])
                .then(ids[a].cmp(&ids[b]))
        });
        let brute: BTreeSet<usize> = order[n - m_expected..].iter().copied().collect();
        let got: BTreeSet<usize> = sel.positions.iter().copied().collect();
        if brute != got {
            return fail(format!("case {case}: selection disagrees with brute force"));
        }

        let weights = selection_weights(&corpus, &schedule, 1).map_err(|e| e.to_string())?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return fail(format!("case {case}: weights sum to {sum}"));
        }
        for (pos, &w) in weights.iter().enumerate() {
            let selected = got.contains(&pos);
            if selected && w != 1.0 / m_expected as f64 {
                return fail(format!("case {case}: selected pair weight {w}"));
            }
            if !selected && w != 0.0 {
                return fail(format!("case {case}: filtered pair has weight {w}"));
            }
        }
    }
    Ok("1000 random corpora (n <= 200): selection = brute-force top subset, weights are a PMF with zeros off-selection".into())
}

// ---------------------------------------------------------------------------
// 3. Analytic gradient vs central differences.

fn criterion_gradient() -> Check {
    let mut rng = seeded_rng(7003, "acceptance-gradient");
    let mut checked = 0usize;
    for instance in 0..20 {
        // A random little world: 3-6 source and target token types, 4-8
        // pairs of length 2-5, random parameters.
        let n_src = rng.random_range(3..=6usize);
        let n_tgt = rng.random_range(3..=6usize);
        let pairs: Vec<SentencePair> = (0..rng.random_range(4..=8usize))
            .map(|i| {
                let len = rng.random_range(2..=5usize);
                let src: Vec<String> = (0..len)
                    .map(|_| format!("s{}", rng.random_range(0..n_src)))
                    .collect();
                let tgt: Vec<String> = (0..len)
                    .map(|_| format!("t{}", rng.random_range(0..n_tgt)))
                    .collect();
                SentencePair::from_text(i as u64, &src.join(" "), &tgt.join(" ")).unwrap()
            })
            .collect();
        let template = ToyTranslationModel::from_pairs(&pairs).map_err(|e| e.to_string())?;
        let theta: Vec<f64> = template.theta().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = ToyTranslationModel::with_vocabs(
            template.src_vocab().clone(),
            template.tgt_vocab().clone(),
            theta.clone(),
        )
        .map_err(|e| e.to_string())?;

        let grad = model.gradient(&pairs);
        let total_ll = |theta: Vec<f64>| -> f64 {
            let m = ToyTranslationModel::with_vocabs(
                template.src_vocab().clone(),
                template.tgt_vocab().clone(),
                theta,
            )
            .unwrap();
            pairs.iter().map(|p| m.log_likelihood(p)).sum()
        };
        let eps = 1e-5;
        let cols = model.tgt_vocab().len();
        for s in 0..model.src_vocab().len() {
            for t in 0..cols {
                let mut up = theta.clone();
                up[s * cols + t] += eps;
                let mut down = theta.clone();
                down[s * cols + t] -= eps;
                let fd = (total_ll(up) - total_ll(down)) / (2.0 * eps);
                let an = grad.get(s, t);
                if an.abs() < 1e-9 && fd.abs() < 1e-9 {
                    continue; // agree the coordinate is flat (e.g. unseen tokens)
                }
                let rel = (an - fd).abs() / an.abs().max(fd.abs());
                if rel >= 1e-4 {
                    return fail(format!(
                        "instance {instance} coordinate ({s},{t}): analytic {an}, central difference {fd}, relative error {rel:.2e}"
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(format!(
        "20 random instances, {checked} non-flat coordinates, all within 1e-4 of central differences"
    ))
}

// ---------------------------------------------------------------------------
// 4. First-order score approximation: quadratic error decay.

fn criterion_taylor() -> Check {
    let mut slopes = Vec::new();
    let mut rels = Vec::new();
    for seed in [40u64, 41, 42] {
        let world = generate(&SynthConfig {
            seed,
            train_per_domain: 30,
            ..SynthConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let model = ToyTranslationModel::from_pairs(&world.train).map_err(|e| e.to_string())?;
        let probe = &world.train[0];
        let seed_pairs = &world.seeds[&world.labels[0].domain];

        let mut points = Vec::new();
        let mut lambda = 1e-2;
        while lambda > 1.2e-3 {
            let c = taylor_check(probe, &model, seed_pairs, lambda);
            if c.abs_err <= 0.0 {
                return fail(format!("seed {seed}: degenerate zero error at lambda {lambda}"));
            }
            points.push((lambda.ln(), c.abs_err.ln()));
            lambda /= 2.0;
        }
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        if !(1.7..=2.3).contains(&slope) {
            return fail(format!("seed {seed}: log-log slope {slope:.3} outside [1.7, 2.3]"));
        }
        slopes.push(slope);

        let fine = taylor_check(probe, &model, seed_pairs, 1e-3);
        let rel = fine.abs_err / fine.lhs.abs();
        if rel >= 0.02 {
            return fail(format!(
                "seed {seed}: relative error {:.3}% at lambda 1e-3",
                100.0 * rel
            ));
        }
        rels.push(rel);
    }
    Ok(format!(
        "3 corpora: error slopes {:?} (quadratic), worst relative error at lambda 1e-3 = {:.4}%",
        slopes.iter().map(|s| (s * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        100.0 * rels.iter().cloned().fold(0.0, f64::max)
    ))
}

// ---------------------------------------------------------------------------
// 5. Surrogate posterior vs a dense oracle; closed-form EI vs Monte Carlo.

fn matern52(r: f64, ell: f64) -> f64 {
    let s = 5.0f64.sqrt() * r / ell;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn gauss_jordan_inverse(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let diag = a[col][col];
        for v in a[col].iter_mut() {
            *v /= diag;
        }
        for v in inv[col].iter_mut() {
            *v /= diag;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col];
            for k in 0..n {
                a[row][k] -= factor * a[col][k];
                inv[row][k] -= factor * inv[col][k];
            }
        }
    }
    inv
}

/// Posterior by explicit matrix inversion: standardize y, invert the full
/// kernel matrix, and take the textbook mean/variance formulas.
fn dense_posterior(x: &[Vec<f64>], y: &[f64], ell: f64, noise: f64, point: &[f64]) -> (f64, f64) {
    let n = x.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    let ys: Vec<f64> = y.iter().map(|v| (v - mean) / sd).collect();

    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = matern52(euclidean(&x[i], &x[j]), ell);
        }
        k[i][i] += noise + JITTER;
    }
    let kinv = gauss_jordan_inverse(k);
    let ks: Vec<f64> = x.iter().map(|xi| matern52(euclidean(xi, point), ell)).collect();
    let mut mu = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            mu += ks[i] * kinv[i][j] * ys[j];
            quad += ks[i] * kinv[i][j] * ks[j];
        }
    }
    let var_std = (matern52(0.0, ell) - quad).max(0.0);
    (mean + sd * mu, sd * var_std.sqrt())
}

fn criterion_surrogate() -> Check {
    // Posterior against the dense oracle.
    let mut rng = seeded_rng(7005, "acceptance-gp");
    let x: Vec<Vec<f64>> = (0..14)
        .map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|p| (4.0 * p[0]).sin() + p[1] * p[1] - 0.5 * p[2])
        .collect();
    let (ell, noise) = (0.6, 1e-4);
    let gp = GpSurrogate::fit_fixed(x.clone(), y.clone(), ell, noise).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..12 {
        let p: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let post = gp.predict(&p);
        let (mu_ref, sd_ref) = dense_posterior(&x, &y, ell, noise, &p);
        worst = worst.max((post.mean - mu_ref).abs()).max((post.sd - sd_ref).abs());
        if (post.mean - mu_ref).abs() > 1e-8 || (post.sd - sd_ref).abs() > 1e-8 {
            return fail(format!(
                "posterior ({}, {}) vs dense oracle ({mu_ref}, {sd_ref})",
                post.mean, post.sd
            ));
        }
    }

    // Closed-form expected improvement against brute-force sampling.
    use rand_distr::{Distribution, Normal};
    let mut worst_ei = 0.0f64;
    for (mean, sd, best) in [(0.5, 0.2, 0.4), (-0.1, 0.05, 0.1), (1.3, 0.5, 1.2)] {
        let normal = Normal::<f64>::new(mean, sd).unwrap();
        let mut mc_rng = seeded_rng(7006, "acceptance-ei");
        let n = 1_000_000;
        let mc: f64 = (0..n)
            .map(|_| (normal.sample(&mut mc_rng) - best).max(0.0))
            .sum::<f64>()
            / n as f64;
        let closed = ei(mean, sd, best);
        worst_ei = worst_ei.max((closed - mc).abs());
        if (closed - mc).abs() > 1e-3 {
            return fail(format!(
                "EI({mean}, {sd}, {best}) = {closed} vs Monte-Carlo {mc}"
            ));
        }
    }
    Ok(format!(
        "posterior within {worst:.1e} of the dense oracle (budget 1e-8); EI within {worst_ei:.1e} of 10^6-sample Monte Carlo (budget 1e-3)"
    ))
}

// ---------------------------------------------------------------------------
// 6. Optimizer quality on the analytic 2-D objective.

struct Quadratic2D;

impl Objective for Quadratic2D {
    fn evaluate(&self, weights: &WeightVector, _seed: u64) -> curricula::Result<f64> {
        let v1 = weights.get("v1").unwrap();
        let v2 = weights.get("v2").unwrap();
        Ok(-(v1 - 0.3).powi(2) - (v2 - 0.7).powi(2))
    }
}

fn criterion_optimizer() -> Check {
    let bounds = Bounds::unit(&["v1", "v2"]).map_err(|e| e.to_string())?;
    let mut bo_best = Vec::new();
    let mut rs_best = Vec::new();
    let mut hits = 0;
    for seed in 0..10u64 {
        let config = SearchConfig {
            trials: 30,
            explore: 25,
            seed: 9000 + seed,
        };
        let bo = bayesopt(&Quadratic2D, &bounds, &config, TrialHistory::new(), |_| Ok(()))
            .map_err(|e| e.to_string())?;
        let best = bo.best().unwrap();
        let linf = (best.weights.get("v1").unwrap() - 0.3)
            .abs()
            .max((best.weights.get("v2").unwrap() - 0.7).abs());
        if linf <= 0.05 {
            hits += 1;
        }
        bo_best.push(best.p);

        let rs = random_search(&Quadratic2D, &bounds, &config, |_| Ok(()))
            .map_err(|e| e.to_string())?;
        rs_best.push(rs.best().unwrap().p);
    }
    let bo_median = median(&bo_best);
    let rs_median = median(&rs_best);
    if hits < 8 {
        return fail(format!("within 0.05 of the optimum in only {hits}/10 seeds"));
    }
    if bo_median < rs_median {
        return fail(format!(
            "median best value {bo_median:.6} below random search's {rs_median:.6}"
        ));
    }
    Ok(format!(
        "{hits}/10 seeds within 0.05 of the optimum; median best {bo_median:.6} vs random search {rs_median:.6}"
    ))
}

// ---------------------------------------------------------------------------
// 7 + 8 + 9. The two-domain desk experiment, shared by three criteria.

struct Experiment {
    config: ExperimentConfig,
    corpus_best: ScoredCorpus,
    best_weights: WeightVector,
    mixture: Vec<SentencePair>,
    trainer: Trainer,
    base: ToyTranslationModel,
    run_seeds: Vec<u64>,
    /// Mixed perplexities per seed.
    baseline_mixed: Vec<f64>,
    multi_mixed: Vec<f64>,
    /// Per-domain perplexities: domain -> per-seed values.
    multi_domain: BTreeMap<String, Vec<f64>>,
    /// feature -> domain -> per-seed values.
    single_domain: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

fn build_experiment(dir: &Path) -> Result<Experiment, String> {
    let err = |e: curricula::Error| e.to_string();

    // 20k pairs across two disjoint synthetic vocabulary styles, 30% of
    // them with shuffled targets.
    let synth = SynthConfig {
        seed: 2024,
        train_per_domain: 10_000,
        noise_fraction: 0.3,
        ..SynthConfig::default()
    };
    let world = generate(&synth).map_err(err)?;
    world.write_to(dir).map_err(err)?;
    let mut config = synth_layout_config(dir, &synth.domains, 7001);
    // Exactly four features: two language-model domain features and two
    // translation-quality features.
    config.features = vec![
        FeatureSpec::Nlm {
            name: "d_legal".into(),
            domain: "legal".into(),
            order: 3,
            mu: 0.5,
        },
        FeatureSpec::Nlm {
            name: "d_medical".into(),
            domain: "medical".into(),
            order: 3,
            mu: 0.5,
        },
        FeatureSpec::Nmt {
            name: "q_legal".into(),
            domain: "legal".into(),
            learning_rate: 1e-2,
            steps: 10,
        },
        FeatureSpec::Nmt {
            name: "q_medical".into(),
            domain: "medical".into(),
            learning_rate: 1e-2,
            steps: 10,
        },
    ];
    // Plateau at 40% and train every run to convergence. Each domain has
    // 7000 clean pairs, so the 8000-pair plateau forces single-feature
    // selections past their clean same-domain supply while a balanced
    // weighting can stay clean — the comparison then measures subset
    // quality. At shorter horizons or smaller plateaus it instead measures
    // how the step budget splits across domains, which no weighting can
    // influence.
    config.schedule.floor = 0.4;
    config.training.final_steps = 200_000;
    config.validate().map_err(err)?;

    let mut corpus = load_train(&config).map_err(err)?;
    let specs = config.features.clone();
    for (name, values) in compute_features(&config, &corpus, &specs, None).map_err(err)? {
        corpus.add_feature(&name, values).map_err(err)?;
    }
    let names = config.feature_names();

    let validation: BTreeMap<String, Vec<SentencePair>> = world.validation.clone();
    let mixture = mix_validation(&validation, &config.mix, config.seed).map_err(err)?;

    // Tune once: 30 trials of 2000 steps from a shared warm model.
    let warm = warm_model(&config, &corpus).map_err(err)?;
    let objective = CurriculumObjective {
        corpus: &corpus,
        base: &warm,
        schedule: config.schedule.build(config.tuning.trial_steps).map_err(err)?,
        trainer: Trainer {
            learning_rate: config.training.learning_rate,
            batch_size: config.training.batch_size,
        },
        validation: &mixture,
    };
    let bounds = Bounds::unit(&names).map_err(err)?;
    let history = bayesopt(
        &objective,
        &bounds,
        &config.tuning.search_config(config.seed),
        TrialHistory::new(),
        |_| Ok(()),
    )
    .map_err(err)?;
    let best_weights = history.best().unwrap().weights.clone();

    // Final 4000-step runs from scratch, 3 seeds each.
    let trainer = Trainer {
        learning_rate: config.training.learning_rate,
        batch_size: config.training.batch_size,
    };
    let steps = config.training.final_steps;
    let schedule = config.schedule.build(steps).map_err(err)?;
    let flat = Schedule::constant(steps);
    let base = ToyTranslationModel::from_pairs(corpus.pairs()).map_err(err)?;
    let run_seeds: Vec<u64> = (0..3)
        .map(|i| derive_seed(config.seed, &format!("final:{i}")))
        .collect();

    let mut corpus_flat = corpus.clone();
    corpus_flat
        .score_with(&WeightVector::constant(&names, 0.0).unwrap())
        .map_err(err)?;
    let mut corpus_best = corpus.clone();
    corpus_best.score_with(&best_weights).map_err(err)?;

    let mut baseline_mixed = Vec::new();
    let mut multi_mixed = Vec::new();
    let mut multi_domain: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut single_domain: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();

    for &seed in &run_seeds {
        let b = trainer.run_curriculum(&base, &corpus_flat, &flat, seed).map_err(err)?;
        baseline_mixed.push(b.model.perplexity(&mixture));

        let m = trainer.run_curriculum(&base, &corpus_best, &schedule, seed).map_err(err)?;
        multi_mixed.push(m.model.perplexity(&mixture));
        for (domain, pairs) in &validation {
            multi_domain
                .entry(domain.clone())
                .or_default()
                .push(m.model.perplexity(pairs));
        }

        for name in &names {
            let mut scored = corpus.clone();
            scored
                .score_with(&WeightVector::basis(&names, name).unwrap())
                .map_err(err)?;
            let s = trainer.run_curriculum(&base, &scored, &schedule, seed).map_err(err)?;
            for (domain, pairs) in &validation {
                single_domain
                    .entry(name.clone())
                    .or_default()
                    .entry(domain.clone())
                    .or_default()
                    .push(s.model.perplexity(pairs));
            }
        }
    }

    Ok(Experiment {
        config,
        corpus_best,
        best_weights,
        mixture,
        trainer,
        base,
        run_seeds,
        baseline_mixed,
        multi_mixed,
        multi_domain,
        single_domain,
    })
}

fn criterion_end_to_end(exp: &Experiment) -> Check {
    let base_med = median(&exp.baseline_mixed);
    let multi_med = median(&exp.multi_mixed);
    let gain = (base_med - multi_med) / base_med;
    if gain < 0.02 {
        return fail(format!(
            "mixed perplexity: baseline {base_med:.3} vs tuned curriculum {multi_med:.3} — only {:.2}% better (needs >= 2%)",
            100.0 * gain
        ));
    }

    let mut domain_notes = Vec::new();
    for (domain, multi_vals) in &exp.multi_domain {
        let multi_med_d = median(multi_vals);
        let best_single = exp
            .single_domain
            .values()
            .map(|per_domain| median(&per_domain[domain]))
            .fold(f64::INFINITY, f64::min);
        if multi_med_d > 1.01 * best_single {
            return fail(format!(
                "{domain}: tuned curriculum {multi_med_d:.3} worse than best single-feature curriculum {best_single:.3} by more than 1%"
            ));
        }
        domain_notes.push(format!("{domain} {multi_med_d:.2} vs best single {best_single:.2}"));
    }
    let weights: Vec<String> = exp
        .best_weights
        .entries()
        .iter()
        .map(|(n, v)| format!("{n}={v:.2}"))
        .collect();
    Ok(format!(
        "mixed: baseline {base_med:.2} -> tuned curriculum {multi_med:.2} ({:.1}% better, median of 3 seeds); per-domain within 1% of the best single-feature run ({}); tuned weights {}",
        100.0 * gain,
        domain_notes.join("; "),
        weights.join(" ")
    ))
}

fn criterion_loss_weighting(exp: &Experiment) -> Check {
    let steps = exp.config.training.final_steps;
    let mut weighted_mixed = Vec::new();
    for &seed in &exp.run_seeds {
        let w = exp
            .trainer
            .run_loss_weighted(&exp.base, &exp.corpus_best, steps, seed)
            .map_err(|e| e.to_string())?;
        weighted_mixed.push(w.model.perplexity(&exp.mixture));
    }
    let curriculum_med = median(&exp.multi_mixed);
    let weighted_med = median(&weighted_mixed);
    if curriculum_med > weighted_med {
        return fail(format!(
            "curriculum mixed perplexity {curriculum_med:.3} above loss-weighted {weighted_med:.3}"
        ));
    }
    Ok(format!(
        "curriculum {curriculum_med:.2} <= loss-weighted {weighted_med:.2} (mixed perplexity, median of 3 seeds)"
    ))
}

fn criterion_balance(exp: &Experiment) -> Check {
    let thresholds: Vec<f64> = (0..10).map(|k| k as f64 / 10.0).collect();
    let rows = dynamic_balance_report(&exp.corpus_best, &thresholds, None)
        .map_err(|e| e.to_string())?;
    let means: Vec<f64> = rows.iter().filter_map(|r| r.mean_f).collect();
    if means.len() != rows.len() {
        return fail("a threshold selected nothing on a full corpus");
    }
    for w in means.windows(2) {
        if w[1] < w[0] {
            return fail(format!("mean score fell from {} to {} as the cut rose", w[0], w[1]));
        }
    }
    // Per-feature means at the extreme cuts, reported for inspection.
    let first = &rows[0];
    let last = rows.last().unwrap();
    let shift: Vec<String> = first
        .feature_means
        .keys()
        .map(|k| format!("{k} {:.3}->{:.3}", first.feature_means[k], last.feature_means[k]))
        .collect();
    Ok(format!(
        "mean score non-decreasing over 10 cuts ({:.3} -> {:.3}); per-feature means 0%->90%: {}",
        means[0],
        means[means.len() - 1],
        shift.join(", ")
    ))
}

// ---------------------------------------------------------------------------
// 10. Byte-identical reruns through the real binary.

fn criterion_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let world = generate(&SynthConfig {
        seed: 77,
        vocab_per_domain: 18,
        train_per_domain: 40,
        noise_fraction: 0.25,
        seed_pairs_per_domain: 10,
        validation_per_domain: 12,
        monolingual_per_domain: 30,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    world.write_to(dir.path()).map_err(|e| e.to_string())?;
    let mut config = synth_layout_config(dir.path(), &["legal".into(), "medical".into()], 55);
    config.tuning.trials = 2;
    config.tuning.explore = 2;
    config.tuning.trial_steps = 10;
    config.training.final_steps = 15;
    config.training.batch_size = 4;
    config.training.finetune_steps = 3;
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, config.to_json_string()).map_err(|e| e.to_string())?;

    let cycle = |out: &Path| -> Result<(), String> {
        let steps: &[&[&str]] = &[
            &["score"],
            &["normalize"],
            &["tune", "--method", "rs"],
            &["tune", "--method", "bo"],
            &["train", "--name", "baseline", "--no-curriculum"],
            &["train", "--name", "multi", "--finetune", "seed=legal"],
            &["eval", "--run", "baseline"],
            &["eval", "--run", "multi"],
            &["report"],
        ];
        for args in steps {
            let output = std::process::Command::new(env!("CARGO_BIN_EXE_curricula"))
                .args(*args)
                .arg("--config")
                .arg(&config_path)
                .arg("--out")
                .arg(out)
                .env_remove("CURRICULA_OUT")
                .output()
                .map_err(|e| e.to_string())?;
            if !output.status.success() {
                return Err(format!(
                    "`{}` exited with {:?}: {}",
                    args.join(" "),
                    output.status.code(),
                    String::from_utf8_lossy(&output.stderr)
                ));
            }
        }
        Ok(())
    };

    let snapshot = |root: &Path| -> BTreeMap<std::path::PathBuf, Vec<u8>> {
        let mut files = BTreeMap::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    files.insert(
                        path.strip_prefix(root).unwrap().to_path_buf(),
                        std::fs::read(&path).unwrap(),
                    );
                }
            }
        }
        files
    };

    let out_a = dir.path().join("out-a");
    let out_b = dir.path().join("out-b");
    cycle(&out_a)?;
    cycle(&out_b)?;
    let snap_a = snapshot(&out_a);
    let snap_b = snapshot(&out_b);
    if snap_a.keys().ne(snap_b.keys()) {
        return fail("the two runs produced different file sets");
    }
    for (path, bytes) in &snap_a {
        if bytes != &snap_b[path] {
            return fail(format!("{} differs between identical runs", path.display()));
        }
    }
    // And re-running in place must reproduce the same bytes again.
    cycle(&out_a)?;
    let snap_c = snapshot(&out_a);
    if snap_a != snap_c {
        return fail("re-running in place changed artifact bytes");
    }
    Ok(format!(
        "{} artifacts byte-identical across a fresh rerun and an in-place rerun (score, normalize, tune, train, eval, report)",
        snap_a.len()
    ))
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let mut failures = Vec::new();
    let f = &mut failures;
    let m = Duration::from_secs(60);

    run_criterion("1. schedule exactness", Duration::from_secs(1), f, criterion_schedule);
    run_criterion("2. selection and weights", Duration::from_secs(10), f, criterion_selection);
    run_criterion("3. gradient check", Duration::from_secs(30), f, criterion_gradient);
    run_criterion("4. first-order approximation", m, f, criterion_taylor);
    run_criterion("5. surrogate oracles", m, f, criterion_surrogate);
    run_criterion("6. optimizer quality", 5 * m, f, criterion_optimizer);

    let dir = tempfile::tempdir().expect("create temp dir");
    let started = Instant::now();
    match build_experiment(dir.path()) {
        Ok(exp) => {
            let setup = started.elapsed();
            println!("      (two-domain experiment built in {setup:.1?}: 20k pairs, tuned once, 18 final runs)");
            // The experiment budget belongs to criterion 7; 8 and 9 reuse it.
            let left = Duration::from_secs(20 * 60).saturating_sub(setup);
            run_criterion("7. end-to-end replication", left, f, || criterion_end_to_end(&exp));
            run_criterion("8. loss-weighting comparison", 20 * m, f, || {
                criterion_loss_weighting(&exp)
            });
            run_criterion("9. composition report", m, f, || criterion_balance(&exp));
        }
        Err(e) => {
            for name in [
                "7. end-to-end replication",
                "8. loss-weighting comparison",
                "9. composition report",
            ] {
                println!("FAIL  {name}: experiment setup failed: {e}");
                f.push(name.to_string());
            }
        }
    }

    run_criterion("10. determinism", 5 * m, f, criterion_determinism);

    assert!(
        failures.is_empty(),
        "acceptance criteria failed: {failures:?}"
    );
}
