//! Stage 2: masked zeroth-order SGD with periodic mask refresh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{rge_estimate, GradientEstimate, MaskProjection};
use crate::objective::Evaluator;
use crate::pruning::{build_mask, build_mask_literal, fisher_stats, magnitude_mask, PruneMask};
use crate::rng::RngStream;

pub const DEFAULT_ETA: f64 = 1e-3;
pub const DEFAULT_PRUNE_INTERVAL: usize = 200;
pub const DEFAULT_Q: usize = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruningMode {
    #[default]
    Zscore,
    Magnitude,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoState {
    pub w: Vec<f64>,
    /// Global step index t of the iterate `w`.
    pub step: usize,
    pub mask: PruneMask,
    pub eta: f64,
}

impl ZoState {
    pub fn new(w: Vec<f64>, step: usize, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {eta}")));
        }
        crate::vector::check_finite(&w)?;
        let d = w.len();
        Ok(Self {
            w,
            step,
            mask: PruneMask::dense(d),
            eta,
        })
    }
}

/// w ← w − η·ĝ with ĝ the masked randomized estimate. Inactive coordinates
/// are left bit-for-bit unchanged under [`MaskProjection::ProbeAndOutput`].
/// On failure the state is untouched.
pub fn zo_step(
    state: &ZoState,
    eval: &Evaluator<'_>,
    mu_rge: f64,
    q: usize,
    stream: &RngStream,
    projection: MaskProjection,
) -> Result<(ZoState, GradientEstimate)> {
    if state.mask.len() != state.w.len() {
        return Err(Error::LengthMismatch {
            expected: state.w.len(),
            actual: state.mask.len(),
        });
    }
    let mask = (!state.mask.is_dense()).then_some(state.mask.active.as_slice());
    let g = rge_estimate(eval, &state.w, mu_rge, q, stream, mask, projection)?;
    let w: Vec<f64> = state
        .w
        .iter()
        .zip(&g.grad)
        .map(|(wi, gi)| wi - state.eta * gi)
        .collect();
    crate::vector::check_finite(&w)?;
    let next = ZoState {
        w,
        step: state.step + 1,
        mask: state.mask.clone(),
        eta: state.eta,
    };
    Ok((next, g))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSchedule {
    pub mode: PruningMode,
    /// Refresh interval K.
    pub interval: usize,
    pub sparsity: f64,
    pub fisher_batches: usize,
    pub mu_cge: f64,
    /// Standardize by the gradient's statistics instead of the squared
    /// gradient's.
    pub literal_normalization: bool,
}

impl MaskSchedule {
    /// True when a refresh is due at step `t` for transition step `t_c`.
    pub fn is_due(&self, t: usize, t_c: usize) -> bool {
        if self.mode == PruningMode::None || t < t_c {
            return false;
        }
        t == t_c || (t - t_c).is_multiple_of(self.interval.max(1))
    }

    /// Queries one refresh costs for dimension `d`.
    pub fn refresh_cost(&self, d: usize) -> u64 {
        match self.mode {
            PruningMode::Zscore => (2 * d * self.fisher_batches) as u64,
            PruningMode::Magnitude | PruningMode::None => 0,
        }
    }
}

/// Rebuilds the mask at the current iterate when the schedule says so;
/// otherwise returns the state unchanged.
pub fn maybe_refresh_mask(
    state: &ZoState,
    eval: &Evaluator<'_>,
    schedule: &MaskSchedule,
    t_c: usize,
    stream: &RngStream,
) -> Result<ZoState> {
    if !schedule.is_due(state.step, t_c) {
        return Ok(state.clone());
    }
    let mut mask = match schedule.mode {
        PruningMode::None => unreachable!("never due"),
        PruningMode::Magnitude => magnitude_mask(&state.w, schedule.sparsity)?,
        PruningMode::Zscore => {
            let stats = fisher_stats(eval, &state.w, schedule.mu_cge, schedule.fisher_batches, stream)?;
            if schedule.literal_normalization {
                build_mask_literal(&state.w, &stats.squared, &stats.mean_grad, schedule.sparsity)?
            } else {
                build_mask(&state.w, &stats.squared, schedule.sparsity)?
            }
        }
    };
    mask.built_at_step = state.step;
    Ok(ZoState {
        mask,
        ..state.clone()
    })
}
