//! Coordinate masks for the sparse stage: Z-pruning and the magnitude
//! baseline.
//!
//! The Z-pruning score of coordinate i is `w[i]² · z(F)[i]`, where F is a
//! Fisher-style diagonal (mean squared coordinate-wise gradient over a few
//! minibatches) and z standardizes it to zero mean and unit variance. The
//! lowest `round(sparsity·d)` scores are frozen. z-scores are signed, so a
//! large weight with below-average Fisher value gets a strongly negative score
//! and is pruned first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::cge_estimate;
use crate::objective::Evaluator;
use crate::rng::RngStream;

pub const DEFAULT_SPARSITY: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneMask {
    pub active: Vec<bool>,
    pub scores: Vec<f64>,
    pub sparsity: f64,
    pub built_at_step: usize,
}

impl PruneMask {
    /// Every coordinate active.
    pub fn dense(d: usize) -> Self {
        Self {
            active: vec![true; d],
            scores: vec![0.0; d],
            sparsity: 0.0,
            built_at_step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn is_dense(&self) -> bool {
        self.active.iter().all(|&a| a)
    }
}

/// (v − mean) / std with the population standard deviation; all zeros when
/// the input is constant.
pub fn zscore(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - mean) / std).collect()
}

/// Per-coordinate statistics of minibatch CGE gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherStats {
    /// Mean of squared gradients, the Fisher diagonal.
    pub squared: Vec<f64>,
    /// Mean gradient.
    pub mean_grad: Vec<f64>,
}

/// Fisher diagonal and mean gradient from `batches` independent minibatch
/// CGE estimates at `w`. Costs batches·2d queries.
pub fn fisher_stats(
    eval: &Evaluator<'_>,
    w: &[f64],
    mu_cge: f64,
    batches: usize,
    stream: &RngStream,
) -> Result<FisherStats> {
    if batches == 0 {
        return Err(Error::InvalidConfig("fisher batches must be at least 1".into()));
    }
    let d = w.len();
    let mut squared = vec![0.0; d];
    let mut mean_grad = vec![0.0; d];
    for b in 0..batches {
        let g = cge_estimate(eval, w, mu_cge, &stream.substream(b as u64))?;
        for i in 0..d {
            squared[i] += g.grad[i] * g.grad[i];
            mean_grad[i] += g.grad[i];
        }
    }
    let inv = 1.0 / batches as f64;
    squared.iter_mut().for_each(|v| *v *= inv);
    mean_grad.iter_mut().for_each(|v| *v *= inv);
    Ok(FisherStats { squared, mean_grad })
}

/// Diagonal Fisher approximation E[ĝ²] over `batches` minibatches.
pub fn fisher_diag(
    eval: &Evaluator<'_>,
    w: &[f64],
    mu_cge: f64,
    batches: usize,
    stream: &RngStream,
) -> Result<Vec<f64>> {
    Ok(fisher_stats(eval, w, mu_cge, batches, stream)?.squared)
}

fn check_sparsity(sparsity: f64) -> Result<()> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidConfig(format!(
            "sparsity must lie in [0, 1), got {sparsity}"
        )));
    }
    Ok(())
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

/// Number of coordinates a mask with this sparsity freezes.
pub fn pruned_count(d: usize, sparsity: f64) -> usize {
    ((sparsity * d as f64).round() as usize).min(d)
}

/// Freezes the `round(sparsity·d)` lowest scores; ties go to the lower index.
pub fn mask_from_scores(scores: Vec<f64>, sparsity: f64) -> Result<PruneMask> {
    check_sparsity(sparsity)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            index: i,
            value: scores[i],
        });
    }
    let d = scores.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut active = vec![true; d];
    for &i in order.iter().take(pruned_count(d, sparsity)) {
        active[i] = false;
    }
    Ok(PruneMask {
        active,
        scores,
        sparsity,
        built_at_step: 0,
    })
}

/// Z-pruning mask: scores = w² · zscore(fisher).
pub fn build_mask(w: &[f64], fisher: &[f64], sparsity: f64) -> Result<PruneMask> {
    check_len(w.len(), fisher.len())?;
    let z = zscore(fisher);
    let scores = w.iter().zip(&z).map(|(wi, zi)| wi * wi * zi).collect();
    mask_from_scores(scores, sparsity)
}

/// Z-pruning with the normalization statistics taken from the gradient
/// itself rather than its square: (F − mean(g)) / std(g).
pub fn build_mask_literal(
    w: &[f64],
    fisher: &[f64],
    grad: &[f64],
    sparsity: f64,
) -> Result<PruneMask> {
    check_len(w.len(), fisher.len())?;
    check_len(w.len(), grad.len())?;
    let n = grad.len() as f64;
    let mean = grad.iter().sum::<f64>() / n;
    let std = (grad.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scores = w
        .iter()
        .zip(fisher)
        .map(|(wi, fi)| {
            let z = if std == 0.0 { 0.0 } else { (fi - mean) / std };
            wi * wi * z
        })
        .collect();
    mask_from_scores(scores, sparsity)
}

/// Magnitude baseline: scores = |w|.
pub fn magnitude_mask(w: &[f64], sparsity: f64) -> Result<PruneMask> {
    mask_from_scores(w.iter().map(|v| v.abs()).collect(), sparsity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{Objective, Phase, QueryCounter};

    #[test]
    fn zscore_of_one_two_three() {
        let z = zscore(&[1.0, 2.0, 3.0]);
        let expect = [-1.2247, 0.0, 1.2247];
        for (a, b) in z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-4);
        }
        assert_eq!(zscore(&[5.0, 5.0, 5.0]), vec![0.0; 3]);
        assert_eq!(zscore(&[2.5]), vec![0.0]);
    }

    #[test]
    fn z_pruning_keeps_high_fisher() {
        let m = build_mask(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        assert_eq!(m.active, vec![false, false, true, true]);
        let z = zscore(&[1.0, 2.0, 3.0, 4.0]);
        for (a, b) in z.iter().zip([-1.342, -0.447, 0.447, 1.342]) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn negative_zscore_prunes_large_weight() {
        // scores: (0, 25·z₂, 25·z₃, 25·z₄) with z₂ the most negative
        let m = build_mask(&[0.0, 5.0, 5.0, 5.0], &[100.0, 1.0, 2.0, 3.0], 0.25).unwrap();
        assert_eq!(m.active, vec![true, false, true, true]);
        assert_eq!(m.scores[0], 0.0);
        assert!(m.scores[1] < m.scores[2]);
    }

    #[test]
    fn zero_sparsity_keeps_everything() {
        assert!(build_mask(&[1.0, -2.0], &[0.3, 0.1], 0.0).unwrap().is_dense());
        assert!(magnitude_mask(&[1.0, -2.0, 0.0], 0.0).unwrap().is_dense());
    }

    #[test]
    fn magnitude_baseline() {
        let m = magnitude_mask(&[-3.0, 1.0, 2.0], 1.0 / 3.0).unwrap();
        assert_eq!(m.active, vec![true, false, true]);
        let m = magnitude_mask(&[1.0, -1.0, 1.0, -1.0], 0.5).unwrap();
        assert_eq!(m.active, vec![false, false, true, true]);
    }

    #[test]
    fn invalid_inputs() {
        assert!(build_mask(&[1.0], &[1.0, 2.0], 0.5).is_err());
        assert!(build_mask(&[1.0, 2.0], &[1.0, 2.0], 1.0).is_err());
        assert!(magnitude_mask(&[1.0, 2.0], -0.1).is_err());
        assert!(mask_from_scores(vec![f64::NAN, 1.0], 0.5).is_err());
    }

    struct Diag;

    impl Objective for Diag {
        fn dim(&self) -> usize {
            2
        }
        fn loss(&self, w: &[f64], _: &RngStream) -> f64 {
            self.full_loss(w)
        }
        fn full_loss(&self, w: &[f64]) -> f64 {
            0.5 * (w[0] * w[0] + 4.0 * w[1] * w[1])
        }
        fn is_stochastic(&self) -> bool {
            false
        }
    }

    #[test]
    fn fisher_of_deterministic_quadratic() {
        let counter = QueryCounter::new();
        let eval = Evaluator::new(&Diag, &counter, Phase::Mask);
        let s = RngStream::new(1, 2);
        let one = fisher_diag(&eval, &[1.0, 1.0], 1e-5, 1, &s).unwrap();
        assert!((one[0] - 1.0).abs() < 1e-9 && (one[1] - 16.0).abs() < 1e-9);
        assert_eq!(counter.total(), 4);
        let three = fisher_diag(&eval, &[1.0, 1.0], 1e-5, 3, &s).unwrap();
        assert_eq!(one, three);
        assert_eq!(counter.total(), 4 + 12);
        assert!(fisher_diag(&eval, &[1.0, 1.0], 1e-5, 0, &s).is_err());
    }

    #[test]
    fn literal_normalization_uses_gradient_statistics() {
        // g = (1, 3): mean 2, std 1; F = (1, 9) → z = (−1, 7)
        let m = build_mask_literal(&[1.0, 1.0], &[1.0, 9.0], &[1.0, 3.0], 0.5).unwrap();
        assert_eq!(m.scores, vec![-1.0, 7.0]);
        assert_eq!(m.active, vec![false, true]);
    }
}
