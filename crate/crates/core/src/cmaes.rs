//! Covariance matrix adaptation evolution strategy with box clamping,
//! seeded sampling, and parallel evaluation.
//!
//! Sampling for iteration `g` draws from a ChaCha stream keyed by
//! `(seed, g)`, and fitness values are gathered in candidate order, so the
//! run is bit-identical for any number of evaluation workers.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitness assigned to candidates whose evaluation failed.
pub const FAILURE_FITNESS: f64 = 1e6;

const MIN_EIGENVALUE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmaesConfig {
    pub population: usize,
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub max_iterations: usize,
    pub max_evaluations: Option<usize>,
    /// Stop once the best fitness is at or below this.
    pub target: Option<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub seed: u64,
    /// Evaluation threads; 0 uses the global pool.
    pub workers: usize,
    /// Fitness for candidates whose objective errors. `None` aborts the run.
    pub failure_fitness: Option<f64>,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        CmaesConfig {
            population: 60,
            mean: Vec::new(),
            sigma: 0.3,
            max_iterations: 50,
            max_evaluations: None,
            target: None,
            lower: None,
            upper: None,
            seed: 0,
            workers: 0,
            failure_fitness: Some(FAILURE_FITNESS),
        }
    }
}

impl CmaesConfig {
    pub fn new(mean: Vec<f64>, sigma: f64) -> Self {
        CmaesConfig {
            mean,
            sigma,
            ..CmaesConfig::default()
        }
    }

    /// The unit box `[0, 1]^d`.
    pub fn unit_box(mut self) -> Self {
        let d = self.mean.len();
        self.lower = Some(vec![0.0; d]);
        self.upper = Some(vec![1.0; d]);
        self
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn check(&self) -> Result<()> {
        let d = self.dimension();
        if d == 0 {
            return Err(Error::invalid("search space must have at least one dimension"));
        }
        if self.population < 4 {
            return Err(Error::invalid("population must be at least 4"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("initial step size must be positive"));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial mean"));
        }
        for b in [&self.lower, &self.upper].into_iter().flatten() {
            if b.len() != d {
                return Err(Error::Shape {
                    expected: format!("{d} bounds"),
                    actual: b.len().to_string(),
                });
            }
        }
        if let (Some(lo), Some(hi)) = (&self.lower, &self.upper) {
            if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                return Err(Error::invalid("lower bounds must not exceed upper bounds"));
            }
        }
        Ok(())
    }

    fn clamp(&self, x: &mut [f64]) {
        if let Some(lo) = &self.lower {
            x.iter_mut().zip(lo).for_each(|(v, l)| *v = v.max(*l));
        }
        if let Some(hi) = &self.upper {
            x.iter_mut().zip(hi).for_each(|(v, h)| *v = v.min(*h));
        }
    }
}

/// Strategy constants derived from dimension and population size.
#[derive(Debug, Clone)]
struct Strategy {
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Strategy {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let s: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / s).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Strategy {
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// Points proposed by [`CmaesState::ask`].
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    /// Samples as drawn, used for the distribution update.
    pub raw: Vec<Vec<f64>>,
    /// Samples clamped into the box; these are the points to evaluate.
    pub clamped: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct CmaesState {
    config: CmaesConfig,
    strategy: Strategy,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    sigma: f64,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    iteration: usize,
    evaluations: usize,
    best: Option<(Vec<f64>, f64)>,
}

impl CmaesState {
    pub fn new(config: &CmaesConfig) -> Result<Self> {
        config.check()?;
        let n = config.dimension();
        let mut mean = config.mean.clone();
        config.clamp(&mut mean);
        Ok(CmaesState {
            config: config.clone(),
            strategy: Strategy::new(n, config.population),
            mean: DVector::from_vec(mean),
            cov: DMatrix::identity(n, n),
            sigma: config.sigma,
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            iteration: 0,
            evaluations: 0,
            best: None,
        })
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(x, f)| (x.as_slice(), *f))
    }

    /// Draws `population` samples from `N(mean, σ²C)`.
    pub fn ask(&self) -> Candidates {
        let n = self.mean.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.iteration as u64);
        let mut raw = Vec::with_capacity(self.config.population);
        let mut clamped = Vec::with_capacity(self.config.population);
        for _ in 0..self.config.population {
            let z = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let y = &self.basis * z.component_mul(&self.scales);
            let x: Vec<f64> = (&self.mean + self.sigma * y).iter().copied().collect();
            let mut c = x.clone();
            self.config.clamp(&mut c);
            raw.push(x);
            clamped.push(c);
        }
        Candidates { raw, clamped }
    }

    /// Updates the distribution from evaluated candidates.
    pub fn tell(&mut self, candidates: &Candidates, fitness: &[f64]) -> Result<()> {
        let lambda = self.config.population;
        if candidates.raw.len() != lambda || fitness.len() != lambda {
            return Err(Error::Shape {
                expected: format!("{lambda} candidates and fitness values"),
                actual: format!("{} / {}", candidates.raw.len(), fitness.len()),
            });
        }
        if fitness.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("fitness"));
        }
        let n = self.mean.len();
        let st = &self.strategy;
        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));

        let best = order[0];
        if self.best.as_ref().is_none_or(|(_, f)| fitness[best] < *f) {
            self.best = Some((candidates.clamped[best].clone(), fitness[best]));
        }

        let old_mean = self.mean.clone();
        let steps: Vec<DVector<f64>> = order[..st.mu]
            .iter()
            .map(|&i| (DVector::from_column_slice(&candidates.raw[i]) - &old_mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in st.weights.iter().zip(&steps) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean = &old_mean + self.sigma * &y_w;

        // C^{-1/2} y_w = B D^{-1} Bᵀ y_w
        let inv_sqrt = &self.basis * (self.basis.transpose() * &y_w).component_div(&self.scales);
        let cs = st.c_sigma;
        self.p_sigma = (1.0 - cs) * &self.p_sigma + (cs * (2.0 - cs) * st.mu_eff).sqrt() * inv_sqrt;
        let gen = (self.iteration + 1) as f64;
        let ps_norm = self.p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - cs).powf(2.0 * gen)).sqrt() < (1.4 + 2.0 / (n as f64 + 1.0)) * st.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        let cc = st.c_c;
        self.p_c = (1.0 - cc) * &self.p_c + h * (cc * (2.0 - cc) * st.mu_eff).sqrt() * &y_w;

        let decay = 1.0 - st.c_1 - st.c_mu + (1.0 - h) * st.c_1 * cc * (2.0 - cc);
        let mut cov = decay * &self.cov;
        cov.ger(st.c_1, &self.p_c, &self.p_c, 1.0);
        for (w, y) in st.weights.iter().zip(&steps) {
            cov.ger(st.c_mu * w, y, y, 1.0);
        }
        self.cov = symmetrized(cov);
        self.sigma *= ((cs / st.d_sigma) * (ps_norm / st.chi_n - 1.0)).exp();
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Optimization(format!("step size became {}", self.sigma)));
        }
        self.decompose();
        self.iteration += 1;
        self.evaluations += lambda;
        Ok(())
    }

    /// Eigen-decomposes C, flooring eigenvalues so C stays positive definite.
    fn decompose(&mut self) {
        let eig = SymmetricEigen::new(self.cov.clone());
        let values = eig.eigenvalues.map(|v| v.max(MIN_EIGENVALUE));
        let repaired = eig.eigenvalues.iter().any(|v| *v < MIN_EIGENVALUE);
        self.basis = eig.eigenvectors;
        self.scales = values.map(f64::sqrt);
        if repaired {
            let d = DMatrix::from_diagonal(&values);
            self.cov = symmetrized(&self.basis * d * self.basis.transpose());
        }
    }
}

fn symmetrized(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub evaluations: usize,
    /// Best fitness so far.
    pub best: f64,
    pub mean_fitness: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaesResult {
    pub best: Vec<f64>,
    pub fitness: f64,
    pub history: Vec<HistoryRow>,
    /// Candidates whose objective failed, over the whole run.
    pub failures: usize,
}

/// Writes `iteration,evaluations,best,mean_fitness,sigma`.
pub fn write_history_csv(history: &[HistoryRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in history {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Minimizes `objective` from the configured start. With a zero iteration
/// budget the initial mean is evaluated once and returned.
pub fn minimize<F>(objective: F, config: &CmaesConfig) -> Result<CmaesResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let mut state = CmaesState::new(config)?;
    let pool = match config.workers {
        0 => None,
        w => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Optimization(e.to_string()))?,
        ),
    };
    let score = |x: &Vec<f64>| -> Result<(f64, bool)> {
        match objective(x) {
            Ok(f) if f.is_finite() => Ok((f, false)),
            Ok(_) => config
                .failure_fitness
                .map(|p| (p, true))
                .ok_or(Error::NonFinite("objective value")),
            Err(e) => config.failure_fitness.map(|p| (p, true)).ok_or(e),
        }
    };
    let evaluate = |points: &[Vec<f64>]| -> Result<Vec<(f64, bool)>> {
        match &pool {
            Some(p) if config.workers > 1 => p.install(|| points.par_iter().map(score).collect()),
            Some(_) => points.iter().map(score).collect(),
            None => points.par_iter().map(score).collect(),
        }
    };

    let mut history = Vec::new();
    let mut failures = 0;
    if config.max_iterations == 0 {
        let (f, failed) = score(&state.mean().to_vec())?;
        return Ok(CmaesResult {
            best: state.mean().to_vec(),
            fitness: f,
            history,
            failures: failed as usize,
        });
    }
    while state.iteration() < config.max_iterations {
        if config
            .max_evaluations
            .is_some_and(|m| state.evaluations() + config.population > m)
        {
            break;
        }
        let cands = state.ask();
        let scored = evaluate(&cands.clamped)?;
        failures += scored.iter().filter(|s| s.1).count();
        let fitness: Vec<f64> = scored.iter().map(|s| s.0).collect();
        state.tell(&cands, &fitness)?;
        let best = state.best().expect("tell records a best point").1;
        history.push(HistoryRow {
            iteration: state.iteration(),
            evaluations: state.evaluations(),
            best,
            mean_fitness: fitness.iter().sum::<f64>() / fitness.len() as f64,
            sigma: state.sigma(),
        });
        if config.target.is_some_and(|t| best <= t) {
            break;
        }
    }
    let (best, fitness) = state
        .best()
        .map(|(x, f)| (x.to_vec(), f))
        .ok_or_else(|| Error::Optimization("no generation completed".into()))?;
    Ok(CmaesResult {
        best,
        fitness,
        history,
        failures,
    })
}
