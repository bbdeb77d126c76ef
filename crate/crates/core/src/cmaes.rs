//! Stage 1: CMA-ES with a sharpness-aware shift of the sampling center.
//!
//! The search distribution is the canonical (μ/μ_w, λ)-CMA-ES with cumulative
//! step-size adaptation and rank-one plus rank-μ covariance updates. The
//! sharpness-aware variant evaluates every candidate at
//! `ε* + θ + σ·C^{1/2}z`, where ε* is the worst-case ascent step computed once
//! per generation at the mean. Recombination works on the sampled steps
//! `C^{1/2}z`, so the mean θ is the point whose perturbed neighbourhood is
//! being scored; with ε* = 0 the update is exactly the canonical one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{cge_estimate, sam_perturbation, DEFAULT_TAU};
use crate::objective::Evaluator;
use crate::rng::{fill_gaussian, RngStream};
use crate::vector::{check_finite, norm2};

pub const DEFAULT_POPULATION: usize = 40;
pub const DEFAULT_RHO: f64 = 0.1;
pub const DEFAULT_SIGMA0: f64 = 0.4;

const GRADIENT: u64 = 0;
const SAMPLING: u64 = 1;
const FITNESS: u64 = 2;

/// Strategy constants derived from the dimension and the population size.
#[derive(Clone, Debug, PartialEq)]
pub struct CmaParams {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
    /// Generations between eigendecompositions of C.
    pub eigen_interval: usize,
}

/// Normalized log-rank weights for the best ⌊λ/2⌋ candidates.
pub fn recombination_weights(lambda: usize) -> Vec<f64> {
    let mu = lambda / 2;
    let raw: Vec<f64> = (1..=mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

impl CmaParams {
    pub fn new(d: usize, lambda: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if lambda < 2 {
            return Err(Error::InvalidConfig(format!(
                "population size must be at least 2, got {lambda}"
            )));
        }
        let n = d as f64;
        let weights = recombination_weights(lambda);
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        let eigen_interval = ((1.0 / (10.0 * n * (c_1 + c_mu))).floor() as usize).max(1);
        Ok(Self {
            lambda,
            mu: weights.len(),
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            eigen_interval,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
struct EigenCache {
    /// Symmetric square root B·D·Bᵀ of C as of `refreshed_at`.
    sqrt_cov: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    refreshed_at: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmaState {
    pub theta: Vec<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub generation: usize,
    params: CmaParams,
    eigen: EigenCache,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    /// C^{1/2}z with the square root used at sampling time.
    pub step: Vec<f64>,
    pub fitness: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub grad_norm: f64,
    pub sigma: f64,
    /// Best candidate of this generation.
    pub best: Vec<f64>,
}

fn decompose(cov: &DMatrix<f64>, generation: usize) -> Result<(DMatrix<f64>, EigenCache)> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::CovarianceDegenerate("non-finite entry".into()));
    }
    let d = cov.nrows();
    let eig = SymmetricEigen::try_new(cov.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::CovarianceDegenerate("eigendecomposition did not converge".into()))?;
    let trace: f64 = eig.eigenvalues.iter().sum();
    if !(trace > 0.0) {
        return Err(Error::CovarianceDegenerate(format!("trace {trace}")));
    }
    let floor = 1e-14 * trace / d as f64;
    let mut repaired = false;
    let eigenvalues = eig.eigenvalues.map(|l| {
        if l < floor {
            repaired = true;
            floor
        } else {
            l
        }
    });
    let basis = &eig.eigenvectors;
    let cov = if repaired {
        let c = basis * DMatrix::from_diagonal(&eigenvalues) * basis.transpose();
        (&c + c.transpose()) * 0.5
    } else {
        cov.clone()
    };
    let sqrt_cov = basis * DMatrix::from_diagonal(&eigenvalues.map(f64::sqrt)) * basis.transpose();
    Ok((
        cov,
        EigenCache {
            sqrt_cov,
            eigenvalues,
            refreshed_at: generation,
        },
    ))
}

impl CmaState {
    /// Starts from mean `theta0`, step size `sigma0` and C = I.
    pub fn new(theta0: &[f64], sigma0: f64, population: usize) -> Result<Self> {
        let d = theta0.len();
        let params = CmaParams::new(d, population)?;
        check_finite(theta0)?;
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma0 must be positive, got {sigma0}")));
        }
        let cov = DMatrix::identity(d, d);
        let (cov, eigen) = decompose(&cov, 0)?;
        Ok(Self {
            theta: theta0.to_vec(),
            sigma: sigma0,
            cov,
            p_sigma: DVector::zeros(d),
            p_c: DVector::zeros(d),
            generation: 0,
            params,
            eigen,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn params(&self) -> &CmaParams {
        &self.params
    }

    /// Eigenvalues of C at the last refresh.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigen.eigenvalues
    }

    /// Generations since the cached decomposition was refreshed.
    pub fn eigen_staleness(&self) -> usize {
        self.generation - self.eigen.refreshed_at
    }
}

/// Draws `population` candidates wⁱ = ε* + θ + σ·C^{1/2}zⁱ, one substream per
/// candidate.
pub fn sample_population(
    state: &CmaState,
    eps_star: &[f64],
    population: usize,
    stream: &RngStream,
) -> Result<Vec<Candidate>> {
    let d = state.dim();
    if population < 2 {
        return Err(Error::InvalidConfig(format!(
            "population size must be at least 2, got {population}"
        )));
    }
    if population != state.params.lambda {
        return Err(Error::InvalidConfig(format!(
            "state was configured for population {}, asked for {population}",
            state.params.lambda
        )));
    }
    if eps_star.len() != d {
        return Err(Error::LengthMismatch {
            expected: d,
            actual: eps_star.len(),
        });
    }
    Ok((0..population)
        .map(|i| {
            let mut z = vec![0.0; d];
            fill_gaussian(&mut stream.substream(i as u64).rng(), &mut z);
            let step = &state.eigen.sqrt_cov * DVector::from_column_slice(&z);
            let w = (0..d)
                .map(|k| eps_star[k] + state.theta[k] + state.sigma * step[k])
                .collect();
            Candidate {
                w,
                z,
                step: step.as_slice().to_vec(),
                fitness: None,
            }
        })
        .collect())
}

/// Fills every fitness with one metered evaluation on the candidate's own
/// substream. Evaluations run in parallel; results do not depend on scheduling.
pub fn evaluate_population(
    mut candidates: Vec<Candidate>,
    eval: &Evaluator<'_>,
    stream: &RngStream,
) -> Vec<Candidate> {
    candidates.par_iter_mut().enumerate().for_each(|(i, c)| {
        c.fitness = Some(eval.evaluate(&c.w, &stream.substream(i as u64)));
    });
    candidates
}

fn usable(c: &Candidate) -> Option<f64> {
    c.fitness.filter(|f| f.is_finite())
}

/// Candidate indices best-first; unevaluated or non-finite candidates rank
/// last, ties keep sampling order.
pub fn rank(candidates: &[Candidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| match (usable(&candidates[a]), usable(&candidates[b])) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    order
}

/// One canonical CMA-ES update from an evaluated generation.
pub fn update_state(state: &CmaState, candidates: &[Candidate]) -> Result<CmaState> {
    let p = &state.params;
    let d = state.dim();
    if candidates.len() != p.lambda {
        return Err(Error::InvalidConfig(format!(
            "expected {} candidates, got {}",
            p.lambda,
            candidates.len()
        )));
    }
    let order = rank(candidates);
    // Non-finite candidates that still land among the parents get no weight.
    let parents: Vec<(usize, f64)> = order
        .iter()
        .take(p.mu)
        .zip(&p.weights)
        .filter(|(&i, _)| usable(&candidates[i]).is_some())
        .map(|(&i, &w)| (i, w))
        .collect();
    let kept: f64 = parents.iter().map(|(_, w)| w).sum();
    let parents: Vec<(usize, f64)> = if parents.len() == p.mu || kept <= 0.0 {
        parents
    } else {
        parents.into_iter().map(|(i, w)| (i, w / kept)).collect()
    };

    let mut step_mean = DVector::zeros(d);
    let mut z_mean = DVector::zeros(d);
    for &(i, w) in &parents {
        step_mean += DVector::from_column_slice(&candidates[i].step) * w;
        z_mean += DVector::from_column_slice(&candidates[i].z) * w;
    }

    let mut next = state.clone();
    for k in 0..d {
        next.theta[k] = state.theta[k] + state.sigma * step_mean[k];
    }

    let cs = p.c_sigma;
    next.p_sigma = &state.p_sigma * (1.0 - cs) + &z_mean * (cs * (2.0 - cs) * p.mu_eff).sqrt();
    let gen = (state.generation + 1) as f64;
    let ps_norm = next.p_sigma.norm();
    let h_sigma = ps_norm / (1.0 - (1.0 - cs).powf(2.0 * gen)).sqrt() / p.chi_n
        < 1.4 + 2.0 / (d as f64 + 1.0);
    let h = if h_sigma { 1.0 } else { 0.0 };
    let cc = p.c_c;
    next.p_c = &state.p_c * (1.0 - cc) + &step_mean * (h * (cc * (2.0 - cc) * p.mu_eff).sqrt());

    let delta_h = (1.0 - h) * cc * (2.0 - cc);
    let mut rank_mu = DMatrix::zeros(d, d);
    for &(i, w) in &parents {
        let y = DVector::from_column_slice(&candidates[i].step);
        rank_mu += &y * y.transpose() * w;
    }
    let weight_sum: f64 = parents.iter().map(|(_, w)| w).sum();
    let cov = &state.cov * (1.0 - p.c_1 - p.c_mu * weight_sum)
        + (&next.p_c * next.p_c.transpose() + &state.cov * delta_h) * p.c_1
        + rank_mu * p.c_mu;
    next.cov = (&cov + cov.transpose()) * 0.5;

    next.sigma = state.sigma * ((cs / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp();
    if !(next.sigma > 0.0 && next.sigma.is_finite()) {
        // exp underflow after a long stall; keep the smallest positive step
        next.sigma = next.sigma.clamp(f64::MIN_POSITIVE, f64::MAX);
    }
    next.generation = state.generation + 1;

    if next.generation - state.eigen.refreshed_at >= p.eigen_interval {
        let (cov, eigen) = decompose(&next.cov, next.generation)?;
        next.cov = cov;
        next.eigen = eigen;
    }
    Ok(next)
}

fn summarize(
    generation: usize,
    candidates: &[Candidate],
    grad_norm: f64,
    sigma: f64,
) -> StepRecord {
    let order = rank(candidates);
    let best = &candidates[order[0]];
    let finite: Vec<f64> = candidates.iter().filter_map(usable).collect();
    let mean_fitness = if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    StepRecord {
        generation,
        best_fitness: usable(best).unwrap_or(f64::NAN),
        mean_fitness,
        grad_norm,
        sigma,
        best: best.w.clone(),
    }
}

fn generation_step(
    state: &CmaState,
    eval: &Evaluator<'_>,
    eps_star: &[f64],
    grad_norm: f64,
    stream: &RngStream,
) -> Result<(CmaState, StepRecord)> {
    let candidates = sample_population(state, eps_star, state.params.lambda, &stream.substream(SAMPLING))?;
    let candidates = evaluate_population(candidates, eval, &stream.substream(FITNESS));
    let next = update_state(state, &candidates)?;
    let record = summarize(next.generation, &candidates, grad_norm, next.sigma);
    Ok((next, record))
}

/// One sharpness-aware generation: CGE gradient at θ, ε* = ρ·g/‖g‖, then
/// sample, evaluate and update. Consumes exactly 2d + S queries.
pub fn sharpness_step(
    state: &CmaState,
    eval: &Evaluator<'_>,
    rho: f64,
    mu_cge: f64,
    population: usize,
    stream: &RngStream,
) -> Result<(CmaState, StepRecord)> {
    if population != state.params.lambda {
        return Err(Error::InvalidConfig(format!(
            "state was configured for population {}, asked for {population}",
            state.params.lambda
        )));
    }
    let g = cge_estimate(eval, &state.theta, mu_cge, &stream.substream(GRADIENT))?;
    let eps_star = sam_perturbation(&g.grad, rho, DEFAULT_TAU);
    generation_step(state, eval, &eps_star, norm2(&g.grad), stream)
}

/// One plain CMA-ES generation on the same substreams as [`sharpness_step`].
/// Consumes exactly S queries.
pub fn naive_step(
    state: &CmaState,
    eval: &Evaluator<'_>,
    stream: &RngStream,
) -> Result<(CmaState, StepRecord)> {
    let zeros = vec![0.0; state.dim()];
    generation_step(state, eval, &zeros, f64::NAN, stream)
}
