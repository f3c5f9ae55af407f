//! Gaussian-process surrogate over the unit box, with expected-improvement
//! acquisition and a deterministic proposal search.
//!
//! The surrogate is a standard GP regression: Matérn-5/2 kernel with unit
//! signal variance and a single shared length-scale, observations
//! standardized to zero mean and unit variance, hyperparameters (length
//! scale × noise) picked by maximum marginal likelihood over a small grid.
//! Everything runs through one Cholesky factorization of the kernel matrix
//! (plus a fixed jitter), so fits are exact, fast, and deterministic.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Numerical ridge always added to the kernel diagonal.
pub const JITTER: f64 = 1e-8;

/// Hyperparameter grid: 8 length scales log-spaced over `[0.1, 2.0]`.
fn length_scale_grid() -> [f64; 8] {
    let mut grid = [0.0; 8];
    let (lo, hi) = (0.1f64, 2.0f64);
    let step = (hi / lo).powf(1.0 / 7.0);
    let mut v = lo;
    for g in grid.iter_mut() {
        *g = v;
        v *= step;
    }
    grid
}

/// Hyperparameter grid: observation-noise variances.
const NOISE_GRID: [f64; 5] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

/// Matérn-5/2 correlation at distance `r` for length scale `ell` (unit
/// signal variance).
fn matern52(r: f64, ell: f64) -> f64 {
    let s = 5.0f64.sqrt() * r / ell;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Posterior mean and standard deviation at one point, in observation
/// units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    /// Posterior mean.
    pub mean: f64,
    /// Posterior standard deviation (never negative).
    pub sd: f64,
}

/// A fitted Gaussian-process surrogate.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    x: Vec<Vec<f64>>,
    /// Standardization of the raw observations.
    y_mean: f64,
    y_sd: f64,
    length_scale: f64,
    noise: f64,
    chol: Cholesky<f64, nalgebra::Dyn>,
    /// `K^-1 y_std`.
    alpha: DVector<f64>,
    log_marginal: f64,
}

impl GpSurrogate {
    /// Fit with hyperparameters chosen by maximum marginal likelihood over
    /// the length-scale × noise grid.
    pub fn fit(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<GpSurrogate> {
        validate(&x, &y)?;
        let mut best: Option<GpSurrogate> = None;
        for &ell in &length_scale_grid() {
            for &noise in &NOISE_GRID {
                let cand = GpSurrogate::fit_fixed(x.clone(), y.clone(), ell, noise)?;
                if best
                    .as_ref()
                    .map(|b| cand.log_marginal > b.log_marginal)
                    .unwrap_or(true)
                {
                    best = Some(cand);
                }
            }
        }
        Ok(best.expect("grid is non-empty"))
    }

    /// Fit with explicit hyperparameters.
    pub fn fit_fixed(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        length_scale: f64,
        noise: f64,
    ) -> Result<GpSurrogate> {
        validate(&x, &y)?;
        if !(length_scale.is_finite() && length_scale > 0.0) || !(noise.is_finite() && noise >= 0.0)
        {
            return Err(Error::invalid(format!(
                "bad hyperparameters: length scale {length_scale}, noise {noise}"
            )));
        }
        let n = x.len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64;
        let y_sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let y_std = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_sd));

        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = matern52(euclidean(&x[i], &x[j]), length_scale);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += noise + JITTER;
        }
        let chol = Cholesky::new(k).ok_or_else(|| {
            Error::Numerical(format!(
                "kernel matrix not positive definite (length scale {length_scale}, noise {noise})"
            ))
        })?;
        let alpha = chol.solve(&y_std);

        // log p(y) = -1/2 y^T alpha - sum(log L_ii) - n/2 log(2 pi)
        let log_det_half: f64 = (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum();
        let log_marginal = -0.5 * y_std.dot(&alpha)
            - log_det_half
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

        Ok(GpSurrogate {
            x,
            y_mean,
            y_sd,
            length_scale,
            noise,
            chol,
            alpha,
            log_marginal,
        })
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.x.len()
    }

    /// True when fitted on no points (unreachable via constructors).
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Chosen length scale.
    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    /// Chosen observation-noise variance.
    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Log marginal likelihood of the standardized observations.
    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    /// Posterior at `point`, in the units of the raw observations.
    pub fn predict(&self, point: &[f64]) -> Posterior {
        let std = self.predict_standardized(point);
        Posterior {
            mean: self.y_mean + self.y_sd * std.mean,
            sd: self.y_sd * std.sd,
        }
    }

    /// Posterior in standardized units (zero-mean, unit-variance
    /// observation space).
    pub fn predict_standardized(&self, point: &[f64]) -> Posterior {
        let n = self.x.len();
        let k_star = DVector::from_iterator(
            n,
            self.x
                .iter()
                .map(|xi| matern52(euclidean(xi, point), self.length_scale)),
        );
        let mean = k_star.dot(&self.alpha);
        let solved = self.chol.solve(&k_star);
        let var = matern52(0.0, self.length_scale) - k_star.dot(&solved);
        Posterior {
            mean,
            sd: var.max(0.0).sqrt(),
        }
    }
}

fn validate(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::InvalidState("cannot fit a surrogate on no observations".into()));
    }
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "{} inputs for {} observations",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::invalid("zero-dimensional inputs"));
    }
    for row in x {
        if row.len() != d {
            return Err(Error::invalid("ragged input dimensions"));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "surrogate inputs".into(),
            });
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "surrogate observations".into(),
        });
    }
    Ok(())
}

/// Standard normal cumulative distribution function.
fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
fn normal_pdf(z: f64) -> f64 {
    (-(z * z) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement of a Gaussian posterior `(mean, sd)` over the
/// incumbent `best`, for maximization:
/// `(mean - best) Phi(z) + sd phi(z)` with `z = (mean - best)/sd`; with a
/// degenerate posterior (`sd == 0`) it collapses to `max(0, mean - best)`.
pub fn ei(mean: f64, sd: f64, best: f64) -> f64 {
    if sd <= 0.0 {
        return (mean - best).max(0.0);
    }
    let z = (mean - best) / sd;
    (mean - best) * normal_cdf(z) + sd * normal_pdf(z)
}

/// What the proposal search maximizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Acquisition {
    /// Expected improvement over the given incumbent.
    ExpectedImprovement {
        /// Best observed objective value so far.
        best: f64,
    },
    /// The posterior mean itself (pure exploitation).
    PosteriorMean,
}

impl Acquisition {
    fn score(&self, gp: &GpSurrogate, point: &[f64]) -> f64 {
        let post = gp.predict(point);
        match *self {
            Acquisition::ExpectedImprovement { best } => ei(post.mean, post.sd, best),
            Acquisition::PosteriorMean => post.mean,
        }
    }
}

/// Number of uniform seeds scored by the proposal search.
pub const PROPOSAL_SAMPLES: usize = 2048;
/// Coordinate-descent sweeps refining the best seed.
pub const REFINE_SWEEPS: usize = 50;

/// Propose the next unit-box point: score [`PROPOSAL_SAMPLES`] uniform
/// draws, then refine the best by [`REFINE_SWEEPS`] deterministic
/// coordinate-descent sweeps with a halving step. Fully determined by the
/// surrogate, acquisition, dimension, and RNG state.
pub fn propose_next(
    gp: &GpSurrogate,
    acquisition: Acquisition,
    dims: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut best_point = vec![0.0; dims];
    let mut best_score = f64::NEG_INFINITY;
    for _ in 0..PROPOSAL_SAMPLES {
        let point: Vec<f64> = (0..dims).map(|_| rng.random_range(0.0..1.0)).collect();
        let score = acquisition.score(gp, &point);
        if score > best_score {
            best_score = score;
            best_point = point;
        }
    }

    let mut step = 0.1;
    for _ in 0..REFINE_SWEEPS {
        let mut moved = false;
        for d in 0..dims {
            let orig = best_point[d];
            for cand in [(orig - step).max(0.0), (orig + step).min(1.0)] {
                if cand == orig {
                    continue;
                }
                best_point[d] = cand;
                let score = acquisition.score(gp, &best_point);
                if score > best_score {
                    best_score = score;
                    moved = true;
                } else {
                    best_point[d] = orig;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    best_point
}
