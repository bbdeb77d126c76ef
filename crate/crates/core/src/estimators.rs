//! Zeroth-order gradient estimators built from central differences.
//!
//! All estimators replay one stream for the `+` and `-` probe of a difference
//! quotient, so a stochastic objective sees the same minibatch on both sides.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Evaluator;
use crate::rng::{fill_gaussian, RngStream};

/// Degenerate-gradient threshold below which the SAM perturbation is zero.
pub const DEFAULT_TAU: f64 = 1e-12;
pub const DEFAULT_MU_CGE: f64 = 1e-5;
pub const DEFAULT_MU_RGE: f64 = 1e-3;

const DIRECTIONS: u64 = 0;
const PROBES: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    Rge,
    Cge,
    MaskedRge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    pub method: EstimatorKind,
    pub mu_smooth: f64,
    pub queries_used: u64,
    /// Number of random directions; 0 for the coordinate-wise estimator.
    pub q: usize,
}

/// How a mask enters the randomized estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskProjection {
    /// Probe along Ωu and scale Ωu: inactive coordinates get exactly zero.
    #[default]
    ProbeAndOutput,
    /// Probe along Ωu but scale the full u.
    ProbeOnly,
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "smoothing scale must be positive, got {mu}"
        )));
    }
    Ok(())
}

fn check_dim(eval: &Evaluator<'_>, w: &[f64]) -> Result<()> {
    if w.len() != eval.dim() {
        return Err(Error::LengthMismatch {
            expected: eval.dim(),
            actual: w.len(),
        });
    }
    Ok(())
}

/// Central difference along `direction`, both probes on `stream`.
fn difference_quotient(
    eval: &Evaluator<'_>,
    w: &[f64],
    direction: &[f64],
    mu: f64,
    stream: &RngStream,
    probe: usize,
) -> Result<f64> {
    let plus: Vec<f64> = w.iter().zip(direction).map(|(x, u)| x + mu * u).collect();
    let minus: Vec<f64> = w.iter().zip(direction).map(|(x, u)| x - mu * u).collect();
    let f_plus = eval.evaluate(&plus, stream);
    let f_minus = eval.evaluate(&minus, stream);
    for loss in [f_plus, f_minus] {
        if !loss.is_finite() {
            return Err(Error::EstimationFailure {
                coordinate: probe,
                loss,
            });
        }
    }
    Ok((f_plus - f_minus) / (2.0 * mu))
}

fn finite_or_fail(grad: &[f64]) -> Result<()> {
    match grad.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(Error::EstimationFailure {
            coordinate: i,
            loss: grad[i],
        }),
        None => Ok(()),
    }
}

/// Coordinate-wise estimate: grad[i] = (L(w + μeᵢ) − L(w − μeᵢ)) / 2μ.
/// Costs exactly 2d queries, all on one minibatch drawn from `stream`.
pub fn cge_estimate(
    eval: &Evaluator<'_>,
    w: &[f64],
    mu_smooth: f64,
    stream: &RngStream,
) -> Result<GradientEstimate> {
    check_mu(mu_smooth)?;
    check_dim(eval, w)?;
    let d = w.len();
    let mut grad = vec![0.0; d];
    let mut plus = w.to_vec();
    let mut minus = w.to_vec();
    for i in 0..d {
        plus[i] = w[i] + mu_smooth;
        minus[i] = w[i] - mu_smooth;
        let f_plus = eval.evaluate(&plus, stream);
        let f_minus = eval.evaluate(&minus, stream);
        plus[i] = w[i];
        minus[i] = w[i];
        for loss in [f_plus, f_minus] {
            if !loss.is_finite() {
                return Err(Error::EstimationFailure { coordinate: i, loss });
            }
        }
        grad[i] = (f_plus - f_minus) / (2.0 * mu_smooth);
    }
    finite_or_fail(&grad)?;
    Ok(GradientEstimate {
        grad,
        method: EstimatorKind::Cge,
        mu_smooth,
        queries_used: 2 * d as u64,
        q: 0,
    })
}

/// Randomized estimate averaged over `q` Gaussian directions, optionally
/// restricted to the active coordinates of `mask`. Costs exactly 2q queries.
pub fn rge_estimate(
    eval: &Evaluator<'_>,
    w: &[f64],
    mu_smooth: f64,
    q: usize,
    stream: &RngStream,
    mask: Option<&[bool]>,
    projection: MaskProjection,
) -> Result<GradientEstimate> {
    if q == 0 {
        return Err(Error::InvalidConfig("q must be at least 1".into()));
    }
    let directions: Vec<Vec<f64>> = (0..q)
        .map(|j| {
            let mut u = vec![0.0; w.len()];
            fill_gaussian(
                &mut stream.substream(DIRECTIONS).substream(j as u64).rng(),
                &mut u,
            );
            u
        })
        .collect();
    rge_estimate_with_directions(eval, w, mu_smooth, &directions, stream, mask, projection)
}

/// [`rge_estimate`] with caller-supplied directions.
pub fn rge_estimate_with_directions(
    eval: &Evaluator<'_>,
    w: &[f64],
    mu_smooth: f64,
    directions: &[Vec<f64>],
    stream: &RngStream,
    mask: Option<&[bool]>,
    projection: MaskProjection,
) -> Result<GradientEstimate> {
    check_mu(mu_smooth)?;
    check_dim(eval, w)?;
    let d = w.len();
    let q = directions.len();
    if q == 0 {
        return Err(Error::InvalidConfig("q must be at least 1".into()));
    }
    if let Some(m) = mask {
        if m.len() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                actual: m.len(),
            });
        }
    }
    let mut grad = vec![0.0; d];
    for (j, u) in directions.iter().enumerate() {
        if u.len() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                actual: u.len(),
            });
        }
        let masked: Vec<f64> = match mask {
            Some(m) => u
                .iter()
                .zip(m)
                .map(|(&ui, &on)| if on { ui } else { 0.0 })
                .collect(),
            None => u.clone(),
        };
        let probe_stream = stream.substream(PROBES).substream(j as u64);
        let slope = difference_quotient(eval, w, &masked, mu_smooth, &probe_stream, j)?;
        let out = match projection {
            MaskProjection::ProbeAndOutput => &masked,
            MaskProjection::ProbeOnly => u,
        };
        for (g, o) in grad.iter_mut().zip(out) {
            *g += slope * o;
        }
    }
    let inv_q = 1.0 / q as f64;
    grad.iter_mut().for_each(|g| *g *= inv_q);
    finite_or_fail(&grad)?;
    Ok(GradientEstimate {
        grad,
        method: if mask.is_some() {
            EstimatorKind::MaskedRge
        } else {
            EstimatorKind::Rge
        },
        mu_smooth,
        queries_used: 2 * q as u64,
        q,
    })
}

/// Worst-case ascent step of radius `rho`: ρ·g/‖g‖, or zero when ‖g‖ < τ.
pub fn sam_perturbation(grad: &[f64], rho: f64, tau: f64) -> Vec<f64> {
    let norm = crate::vector::norm2(grad);
    if rho == 0.0 || !(norm >= tau) || norm == 0.0 {
        return vec![0.0; grad.len()];
    }
    let scale = rho / norm;
    grad.iter().map(|g| g * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{Objective, Phase, QueryCounter};

    struct Fn1<F>(usize, F);

    impl<F: Fn(&[f64]) -> f64 + Send + Sync> Objective for Fn1<F> {
        fn dim(&self) -> usize {
            self.0
        }
        fn loss(&self, w: &[f64], _: &RngStream) -> f64 {
            (self.1)(w)
        }
        fn full_loss(&self, w: &[f64]) -> f64 {
            (self.1)(w)
        }
        fn is_stochastic(&self) -> bool {
            false
        }
    }

    fn sphere(w: &[f64]) -> f64 {
        0.5 * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn stream() -> RngStream {
        RngStream::new(42, 0)
    }

    #[test]
    fn cge_exact_on_sphere() {
        let obj = Fn1(2, sphere);
        let counter = QueryCounter::new();
        let eval = Evaluator::new(&obj, &counter, Phase::Stage1);
        for mu in [1e-5, 1e-3, 0.1, 1.0] {
            let g = cge_estimate(&eval, &[3.0, 4.0], mu, &stream()).unwrap();
            // exact in real arithmetic; rounding is amplified by 1/μ
            for (gi, want) in g.grad.iter().zip([3.0, 4.0]) {
                assert!((gi - want).abs() <= 1e-9 * want, "mu = {mu}: {gi}");
            }
            assert_eq!(g.queries_used, 4);
        }
        assert_eq!(counter.total(), 16);
    }

    #[test]
    fn cge_of_cubic_has_mu_squared_bias() {
        let obj = Fn1(1, |w: &[f64]| w[0].powi(3));
        let counter = QueryCounter::new();
        let eval = Evaluator::new(&obj, &counter, Phase::Stage1);
        let mu = 1e-3;
        let g = cge_estimate(&eval, &[1.0], mu, &stream()).unwrap();
        // ((1+μ)³ − (1−μ)³) / 2μ = 3 + μ²
        assert!((g.grad[0] - 3.000001).abs() < 1e-9, "{}", g.grad[0]);
    }

    #[test]
    fn constant_objective_gives_zero_gradient() {
        let obj = Fn1(3, |_: &[f64]| 5.0);
        let counter = QueryCounter::new();
        let eval = Evaluator::new(&obj, &counter, Phase::Stage1);
        let w = [0.3, -1.0, 2.0];
        let g = cge_estimate(&eval, &w, 1e-3, &stream()).unwrap();
        assert_eq!(g.grad, vec![0.0; 3]);
        let g = rge_estimate(&eval, &w, 1e-3, 4, &stream(), None, MaskProjection::default())
            .unwrap();
        assert_eq!(g.grad, vec![0.0; 3]);
        assert_eq!(g.queries_used, 8);
    }

    #[test]
    fn rge_linear_with_forced_direction() {
        let obj = Fn1(2, |w: &[f64]| w[0]);
        let counter = QueryCounter::new();
        let eval = Evaluator::new(&obj, &counter, Phase::Stage2);
        let g = rge_estimate_with_directions(
            &eval,
            &[0.7, -0.2],
            1e-3,
            &[vec![1.0, 1.0]],
            &stream(),
            None,
            MaskProjection::default(),
        )
        .unwrap();
        assert!((g.grad[0] - 1.0).abs() < 1e-12);
        assert!((g.grad[1] - 1.0).abs() < 1e-12);
        assert_eq!(g.method, EstimatorKind::Rge);
        assert_eq!(counter.total(), 2);
    }

    #[test]
    fn masked_coordinate_is_exactly_zero() {
        let obj = Fn1(2, sphere);
        let counter = QueryCounter::new();
        let eval = Evaluator::new(&obj, &counter, Phase::Stage2);
        let mask = [true, false];
        for seed in 0..50 {
            let g = rge_estimate(
                &eval,
                &[1.0, 1.0],
                1e-3,
                1,
                &RngStream::new(seed, 0),
                Some(&mask),
                MaskProjection::ProbeAndOutput,
            )
            .unwrap();
            assert_eq!(g.grad[1], 0.0);
            assert_eq!(g.method, EstimatorKind::MaskedRge);
        }
    }

    #[test]
    fn literal_projection_leaks_into_inactive_coordinates() {
        let obj = Fn1(2, sphere);
        let counter = QueryCounter::new();
        let eval = Evaluator::new(&obj, &counter, Phase::Stage2);
        let g = rge_estimate_with_directions(
            &eval,
            &[1.0, 1.0],
            1e-3,
            &[vec![1.0, 2.0]],
            &stream(),
            Some(&[true, false]),
            MaskProjection::ProbeOnly,
        )
        .unwrap();
        // probe along (1, 0): slope 1, output scaled by the full u
        assert!((g.grad[0] - 1.0).abs() < 1e-12);
        assert!((g.grad[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_probe_reports_coordinate() {
        let obj = Fn1(3, |w: &[f64]| if w[2] > 0.5 { f64::NAN } else { 0.0 });
        let counter = QueryCounter::new();
        let eval = Evaluator::new(&obj, &counter, Phase::Stage1);
        let err = cge_estimate(&eval, &[0.0, 0.0, 0.5], 0.1, &stream()).unwrap_err();
        assert!(matches!(err, Error::EstimationFailure { coordinate: 2, .. }));
    }

    #[test]
    fn invalid_arguments() {
        let obj = Fn1(2, sphere);
        let counter = QueryCounter::new();
        let eval = Evaluator::new(&obj, &counter, Phase::Stage1);
        assert!(cge_estimate(&eval, &[1.0, 1.0], 0.0, &stream()).is_err());
        assert!(cge_estimate(&eval, &[1.0], 0.1, &stream()).is_err());
        let none = MaskProjection::default();
        assert!(rge_estimate(&eval, &[1.0, 1.0], 0.1, 0, &stream(), None, none).is_err());
        assert!(
            rge_estimate(&eval, &[1.0, 1.0], 0.1, 1, &stream(), Some(&[true]), none).is_err()
        );
        assert_eq!(counter.total(), 0);
    }

    #[test]
    fn sam_perturbation_cases() {
        let e = sam_perturbation(&[3.0, 4.0], 0.1, DEFAULT_TAU);
        assert!((e[0] - 0.06).abs() < 1e-15 && (e[1] - 0.08).abs() < 1e-15);
        assert_eq!(sam_perturbation(&[3.0, 4.0], 0.0, DEFAULT_TAU), vec![0.0; 2]);
        assert_eq!(sam_perturbation(&[0.0, 0.0], 0.1, DEFAULT_TAU), vec![0.0; 2]);
        assert_eq!(sam_perturbation(&[1e-13, 0.0], 0.1, DEFAULT_TAU), vec![0.0; 2]);
    }
}
