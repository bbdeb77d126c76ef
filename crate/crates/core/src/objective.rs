//! The black-box objective contract and query accounting.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::rng::{fill_gaussian, RngStream};
use crate::vector::ParameterVector;

/// Standard deviation of the default initializer, w₀ ~ N(0, 0.02²·I).
pub const INIT_STD: f64 = 0.02;

/// A forward-only objective.
///
/// `loss` is the only method that models a forward pass of the underlying
/// system and is the only one that is metered. The noise-free `full_loss` and
/// `validation_metric` exist for logging and for the stage-transition rule;
/// they never feed gradient estimates.
///
/// Implementations must be pure functions of `(w, stream)` so that concurrent
/// callers observe bit-identical results.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    /// One (possibly stochastic) loss evaluation. Stochastic objectives draw
    /// their minibatch or noise from `stream`.
    fn loss(&self, w: &[f64], stream: &RngStream) -> f64;

    /// Deterministic full-data loss.
    fn full_loss(&self, w: &[f64]) -> f64;

    /// Deterministic higher-is-better score.
    fn validation_metric(&self, w: &[f64]) -> f64 {
        -self.full_loss(w)
    }

    /// Global minimum L*, when known.
    fn optimum(&self) -> Option<f64> {
        None
    }

    fn is_stochastic(&self) -> bool;

    /// Shared initializer so every method starts from the same w₀.
    fn initial_point(&self, stream: &RngStream) -> ParameterVector {
        let mut values = vec![0.0; self.dim()];
        fill_gaussian(&mut stream.rng(), &mut values);
        values.iter_mut().for_each(|v| *v *= INIT_STD);
        ParameterVector::new(values).expect("dimension is positive")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Stage1,
    Stage2,
    Mask,
}

/// Atomic forward-pass counter with a per-phase breakdown.
#[derive(Debug, Default)]
pub struct QueryCounter {
    stage1: AtomicU64,
    stage2: AtomicU64,
    mask: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTotals {
    pub stage1: u64,
    pub stage2: u64,
    pub mask: u64,
}

impl QueryTotals {
    pub fn total(&self) -> u64 {
        self.stage1 + self.stage2 + self.mask
    }
}

impl QueryCounter {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&self, phase: Phase) -> &AtomicU64 {
        match phase {
            Phase::Stage1 => &self.stage1,
            Phase::Stage2 => &self.stage2,
            Phase::Mask => &self.mask,
        }
    }

    pub fn record(&self, phase: Phase) {
        self.slot(phase).fetch_add(1, Ordering::Relaxed);
    }

    pub fn total(&self) -> u64 {
        self.snapshot().total()
    }

    pub fn snapshot(&self) -> QueryTotals {
        QueryTotals {
            stage1: self.stage1.load(Ordering::Relaxed),
            stage2: self.stage2.load(Ordering::Relaxed),
            mask: self.mask.load(Ordering::Relaxed),
        }
    }
}

/// An objective bound to a counter; every `evaluate` is one metered query.
#[derive(Clone, Copy)]
pub struct Evaluator<'a> {
    objective: &'a dyn Objective,
    counter: &'a QueryCounter,
    phase: Phase,
}

impl<'a> Evaluator<'a> {
    pub fn new(objective: &'a dyn Objective, counter: &'a QueryCounter, phase: Phase) -> Self {
        Self {
            objective,
            counter,
            phase,
        }
    }

    pub fn with_phase(self, phase: Phase) -> Self {
        Self { phase, ..self }
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn objective(&self) -> &'a dyn Objective {
        self.objective
    }

    pub fn counter(&self) -> &'a QueryCounter {
        self.counter
    }

    pub fn evaluate(&self, w: &[f64], stream: &RngStream) -> f64 {
        self.counter.record(self.phase);
        self.objective.loss(w, stream)
    }
}
