//! The two-stage control loop, its log, and post-hoc rate analysis.

use std::ops::RangeInclusive;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cmaes::{naive_step, sharpness_step, CmaState, DEFAULT_POPULATION, DEFAULT_RHO, DEFAULT_SIGMA0};
use crate::error::{Error, Result};
use crate::estimators::{MaskProjection, DEFAULT_MU_CGE, DEFAULT_MU_RGE};
use crate::objective::{Evaluator, Objective, Phase, QueryCounter, QueryTotals};
use crate::pruning::DEFAULT_SPARSITY;
use crate::rng::RngStream;
use crate::zosgd::{
    maybe_refresh_mask, zo_step, MaskSchedule, PruningMode, ZoState, DEFAULT_ETA, DEFAULT_PRUNE_INTERVAL,
    DEFAULT_Q,
};

/// Substream labels under the run's root stream.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const STAGE1: u64 = 1;
    pub const STAGE2: u64 = 2;
    pub const MASK: u64 = 3;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage1Mode {
    #[default]
    Sharp,
    Naive,
    /// Skip stage 1: cold-started ZO-SGD from w₀.
    Off,
}

/// Which stage-1 point seeds stage 2.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Handoff {
    #[default]
    Mean,
    BestCandidate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub d: usize,
    /// Total steps T: stage-1 generations plus stage-2 updates.
    pub total_steps: usize,
    /// Optional cap on forward passes; a step that would exceed it is not
    /// started.
    pub budget: Option<u64>,
    pub population: usize,
    pub rho: f64,
    pub sigma0: f64,
    pub mu_cge: f64,
    pub mu_rge: f64,
    pub q: usize,
    pub eta: f64,
    pub prune_interval: usize,
    pub sparsity: f64,
    /// Minibatches per Fisher estimate; `None` picks 4 for stochastic
    /// objectives and 1 otherwise.
    pub fisher_batches: Option<usize>,
    pub patience: usize,
    pub improve_tol: f64,
    pub stage1_cap: usize,
    pub early_stop: bool,
    pub seed: u64,
    pub stage1: Stage1Mode,
    pub pruning: PruningMode,
    /// Output the full direction u instead of Ωu in the masked estimator.
    pub literal_eq4: bool,
    /// Standardize the squared gradient with the gradient's statistics.
    pub literal_eq5: bool,
    pub handoff: Handoff,
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            d: 1,
            total_steps: 1000,
            budget: None,
            population: DEFAULT_POPULATION,
            rho: DEFAULT_RHO,
            sigma0: DEFAULT_SIGMA0,
            mu_cge: DEFAULT_MU_CGE,
            mu_rge: DEFAULT_MU_RGE,
            q: DEFAULT_Q,
            eta: DEFAULT_ETA,
            prune_interval: DEFAULT_PRUNE_INTERVAL,
            sparsity: DEFAULT_SPARSITY,
            fisher_batches: None,
            patience: 10,
            improve_tol: 0.01,
            stage1_cap: 500,
            early_stop: true,
            seed: 0,
            stage1: Stage1Mode::Sharp,
            pruning: PruningMode::Zscore,
            literal_eq4: false,
            literal_eq5: false,
            handoff: Handoff::Mean,
            record_wall_time: false,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn new(d: usize) -> Self {
        Self { d, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if self.total_steps == 0 {
            return Err(Error::InvalidConfig("total_steps must be at least 1".into()));
        }
        if self.population < 2 {
            return Err(Error::InvalidConfig(format!("population must be at least 2, got {}", self.population)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig(format!("rho must be non-negative, got {}", self.rho)));
        }
        positive("sigma0", self.sigma0)?;
        positive("mu_cge", self.mu_cge)?;
        positive("mu_rge", self.mu_rge)?;
        positive("eta", self.eta)?;
        if self.q == 0 {
            return Err(Error::InvalidConfig("q must be at least 1".into()));
        }
        if self.prune_interval == 0 {
            return Err(Error::InvalidConfig("prune_interval must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::InvalidConfig(format!("sparsity must lie in [0, 1), got {}", self.sparsity)));
        }
        if self.fisher_batches == Some(0) {
            return Err(Error::InvalidConfig("fisher_batches must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        if !(self.improve_tol >= 0.0 && self.improve_tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("improve_tol must be non-negative, got {}", self.improve_tol)));
        }
        Ok(())
    }

    pub fn fisher_batches_for(&self, stochastic: bool) -> usize {
        self.fisher_batches.unwrap_or(if stochastic { 4 } else { 1 })
    }

    /// Queries one stage-1 generation consumes.
    pub fn generation_cost(&self) -> u64 {
        match self.stage1 {
            Stage1Mode::Sharp => (self.population + 2 * self.d) as u64,
            Stage1Mode::Naive => self.population as u64,
            Stage1Mode::Off => 0,
        }
    }

    pub fn mask_schedule(&self, stochastic: bool) -> MaskSchedule {
        MaskSchedule {
            mode: self.pruning,
            interval: self.prune_interval,
            sparsity: self.sparsity,
            fisher_batches: self.fisher_batches_for(stochastic),
            mu_cge: self.mu_cge,
            literal_normalization: self.literal_eq5,
        }
    }

    fn projection(&self) -> MaskProjection {
        if self.literal_eq4 {
            MaskProjection::ProbeOnly
        } else {
            MaskProjection::ProbeAndOutput
        }
    }
}

/// One line of the trajectory. Step 0 is the initial point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    /// 0 for the initial point, then 1 or 2.
    pub stage: u8,
    /// Cumulative forward passes after this step.
    pub queries: u64,
    /// Noise-free loss of the iterate (θ in stage 1, w in stage 2).
    pub train_loss: f64,
    pub val_metric: f64,
    /// CMA-ES step size; NaN outside stage 1.
    pub sigma: f64,
    pub active_coords: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub rows: Vec<StepRow>,
    /// Transition step: number of stage-1 generations run.
    pub t_c: usize,
    pub final_w: Vec<f64>,
    pub queries: QueryTotals,
    /// Fisher batches actually used.
    pub fisher_batches: usize,
}

impl RunLog {
    pub fn final_row(&self) -> &StepRow {
        self.rows.last().expect("a log always holds the initial row")
    }

    pub fn final_step(&self) -> usize {
        self.final_row().step
    }
}

/// True iff the last `patience` entries all fail to beat the best value seen
/// before that window by more than `improve_tol`.
pub fn transition_check(history: &[f64], improve_tol: f64, patience: usize) -> bool {
    if patience == 0 || history.len() <= patience {
        return false;
    }
    let (before, window) = history.split_at(history.len() - patience);
    let best = before.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    window.iter().all(|&m| m - best <= improve_tol)
}

/// Exact query total implied by a configuration and the realized transition
/// and final steps.
pub fn predicted_queries(config: &RunConfig, stochastic: bool, t_c: usize, final_step: usize) -> u64 {
    let schedule = config.mask_schedule(stochastic);
    let refreshes = (t_c..final_step).filter(|&t| schedule.is_due(t, t_c)).count() as u64;
    t_c as u64 * config.generation_cost()
        + (final_step - t_c) as u64 * 2 * config.q as u64
        + refreshes * schedule.refresh_cost(config.d)
}

fn would_exceed(budget: Option<u64>, used: u64, cost: u64) -> bool {
    budget.is_some_and(|b| used + cost > b)
}

/// Runs both stages on `objective` and returns the full trajectory.
pub fn run(config: &RunConfig, objective: &dyn Objective) -> Result<RunLog> {
    config.validate()?;
    if objective.dim() != config.d {
        return Err(Error::LengthMismatch {
            expected: config.d,
            actual: objective.dim(),
        });
    }
    let d = config.d;
    let stochastic = objective.is_stochastic();
    let counter = QueryCounter::new();
    let root = RngStream::new(config.seed, 0);
    let started = Instant::now();
    let wall = || {
        if config.record_wall_time {
            started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    };

    let w0 = objective.initial_point(&root.substream(streams::INIT)).into_inner();
    let mut rows = vec![StepRow {
        step: 0,
        stage: 0,
        queries: 0,
        train_loss: objective.full_loss(&w0),
        val_metric: objective.validation_metric(&w0),
        sigma: if config.stage1 == Stage1Mode::Off { f64::NAN } else { config.sigma0 },
        active_coords: d,
        wall_ms: 0.0,
    }];

    let mut step = 0;
    let mut start = w0;
    if config.stage1 != Stage1Mode::Off {
        let eval = Evaluator::new(objective, &counter, Phase::Stage1);
        let stage1 = root.substream(streams::STAGE1);
        let mut state = CmaState::new(&start, config.sigma0, config.population)?;
        let mut history = vec![rows[0].val_metric];
        let mut best: Option<(f64, Vec<f64>)> = None;
        let cap = config.stage1_cap.min(config.total_steps);
        while step < cap && !would_exceed(config.budget, counter.total(), config.generation_cost()) {
            let stream = stage1.substream(step as u64);
            let (next, record) = match config.stage1 {
                Stage1Mode::Sharp => {
                    sharpness_step(&state, &eval, config.rho, config.mu_cge, config.population, &stream)
                }
                _ => naive_step(&state, &eval, &stream),
            }
            .map_err(|e| e.at_step(step + 1))?;
            state = next;
            step += 1;
            if best.as_ref().is_none_or(|(f, _)| record.best_fitness < *f) {
                best = Some((record.best_fitness, record.best.clone()));
            }
            let val_metric = objective.validation_metric(&state.theta);
            history.push(val_metric);
            rows.push(StepRow {
                step,
                stage: 1,
                queries: counter.total(),
                train_loss: objective.full_loss(&state.theta),
                val_metric,
                sigma: state.sigma,
                active_coords: d,
                wall_ms: wall(),
            });
            if config.early_stop && transition_check(&history, config.improve_tol, config.patience) {
                break;
            }
        }
        start = match (config.handoff, best) {
            (Handoff::BestCandidate, Some((_, w))) => w,
            _ => state.theta,
        };
    }
    let t_c = step;

    let schedule = config.mask_schedule(stochastic);
    let stage2 = root.substream(streams::STAGE2);
    let mask_streams = root.substream(streams::MASK);
    let eval = Evaluator::new(objective, &counter, Phase::Stage2);
    let mask_eval = eval.with_phase(Phase::Mask);
    let mut zo = ZoState::new(start, t_c, config.eta)?;
    while zo.step < config.total_steps {
        let t = zo.step;
        let refresh = if schedule.is_due(t, t_c) { schedule.refresh_cost(d) } else { 0 };
        if would_exceed(config.budget, counter.total(), refresh + 2 * config.q as u64) {
            break;
        }
        let refreshed = maybe_refresh_mask(&zo, &mask_eval, &schedule, t_c, &mask_streams.substream(t as u64))
            .map_err(|e| e.at_step(t + 1))?;
        let (next, _) = zo_step(
            &refreshed,
            &eval,
            config.mu_rge,
            config.q,
            &stage2.substream(t as u64),
            config.projection(),
        )
        .map_err(|e| e.at_step(t + 1))?;
        zo = next;
        rows.push(StepRow {
            step: zo.step,
            stage: 2,
            queries: counter.total(),
            train_loss: objective.full_loss(&zo.w),
            val_metric: objective.validation_metric(&zo.w),
            sigma: f64::NAN,
            active_coords: zo.mask.active_count(),
            wall_ms: wall(),
        });
    }

    Ok(RunLog {
        rows,
        t_c,
        final_w: zo.w,
        queries: counter.snapshot(),
        fisher_batches: schedule.fisher_batches,
    })
}

/// Least-squares fit of log-gap against step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Slope of ln(L − L*) per step; negative under linear convergence.
    pub rate: f64,
    pub r_squared: f64,
}

/// Fits ln(gaps) = a + rate·steps. A perfectly flat series has rate 0 and
/// r² = 1.
pub fn fit_log_linear(steps: &[f64], gaps: &[f64]) -> Result<RateFit> {
    if steps.len() != gaps.len() {
        return Err(Error::LengthMismatch {
            expected: steps.len(),
            actual: gaps.len(),
        });
    }
    if steps.len() < 2 {
        return Err(Error::WindowInvalid(format!("need at least 2 points, got {}", steps.len())));
    }
    if let Some((i, g)) = gaps.iter().enumerate().find(|(_, g)| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::WindowInvalid(format!("gap {g} at position {i} is not positive")));
    }
    let n = steps.len() as f64;
    let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let mx = steps.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = steps.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = steps.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::WindowInvalid("all steps coincide".into()));
    }
    let rate = sxy / sxx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = steps
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - rate * (x - mx)).powi(2))
        .sum();
    // A flat series only differs from its mean by rounding.
    let spread = ys.iter().map(|y| (y - my).abs()).fold(0.0, f64::max);
    let flat = spread <= 1e-12 * my.abs().max(1.0);
    let r_squared = if flat { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit { rate, r_squared })
}

/// Fits the stage-2 rows of `log` whose step lies in `window`.
pub fn fit_linear_rate(log: &RunLog, l_star: f64, window: RangeInclusive<usize>) -> Result<RateFit> {
    if *window.start() < log.t_c {
        return Err(Error::WindowInvalid(format!(
            "window starts at {} before the transition at {}",
            window.start(),
            log.t_c
        )));
    }
    let (steps, gaps): (Vec<f64>, Vec<f64>) = log
        .rows
        .iter()
        .filter(|r| window.contains(&r.step) && r.step >= log.t_c)
        .map(|r| (r.step as f64, r.train_loss - l_star))
        .unzip();
    fit_log_linear(&steps, &gaps)
}
