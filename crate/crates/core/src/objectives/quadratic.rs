use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::rng::{fill_gaussian, RngStream};

/// L(w) = Σᵢ λᵢ φ(xᵢ) with x = Qᵀ(w − w*), φ(x) = ½x² when `skew` = 0.
///
/// Eigenvalues are log-spaced on [1, condition_number]. A positive `skew`
/// blends in e^x − 1 − x, which keeps the minimum and the curvature at w* but
/// adds a third derivative, so central differences are no longer exact.
///
/// With `noise_std` > 0 each evaluation adds
/// `noise_std · (ξ₀ + ξᵀx / √d)`, ξ drawn from the evaluation stream: a
/// loss offset plus a minibatch-like gradient perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub d: usize,
    pub condition_number: f64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    /// Random orthogonal eigenbasis instead of the coordinate axes.
    #[serde(default)]
    pub rotated: bool,
    #[serde(default)]
    pub skew: f64,
}

#[derive(Clone, Debug)]
pub struct Quadratic {
    spec: QuadraticSpec,
    eigenvalues: Vec<f64>,
    basis: Option<DMatrix<f64>>,
    minimizer: Vec<f64>,
}

pub fn make_quadratic(d: usize, condition_number: f64, noise_std: f64, seed: u64) -> Result<Quadratic> {
    Quadratic::new(QuadraticSpec {
        d,
        condition_number,
        noise_std,
        seed,
        rotated: false,
        skew: 0.0,
    })
}

fn phi(skew: f64, x: f64) -> f64 {
    if skew == 0.0 {
        0.5 * x * x
    } else {
        (1.0 - skew) * 0.5 * x * x + skew * (x.exp_m1() - x)
    }
}

fn phi_prime(skew: f64, x: f64) -> f64 {
    if skew == 0.0 {
        x
    } else {
        (1.0 - skew) * x + skew * x.exp_m1()
    }
}

impl Quadratic {
    pub fn new(spec: QuadraticSpec) -> Result<Self> {
        if spec.d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if !(spec.condition_number >= 1.0 && spec.condition_number.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "condition number must be ≥ 1, got {}",
                spec.condition_number
            )));
        }
        if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise_std must be ≥ 0, got {}", spec.noise_std)));
        }
        if !(0.0..1.0).contains(&spec.skew) {
            return Err(Error::InvalidConfig(format!("skew must lie in [0, 1), got {}", spec.skew)));
        }
        let d = spec.d;
        let eigenvalues: Vec<f64> = if d == 1 {
            vec![1.0]
        } else {
            (0..d)
                .map(|i| spec.condition_number.powf(i as f64 / (d - 1) as f64))
                .collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut minimizer = vec![0.0; d];
        fill_gaussian(&mut rng, &mut minimizer);
        let basis = spec.rotated.then(|| {
            let mut g = vec![0.0; d * d];
            fill_gaussian(&mut rng, &mut g);
            DMatrix::from_vec(d, d, g).qr().q()
        });
        Ok(Self {
            spec,
            eigenvalues,
            basis,
            minimizer,
        })
    }

    pub fn spec(&self) -> &QuadraticSpec {
        &self.spec
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// PL constant, λ_min(H).
    pub fn pl_constant(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Gradient Lipschitz constant at the minimizer, λ_max(H).
    pub fn l_smooth(&self) -> f64 {
        *self.eigenvalues.last().expect("d ≥ 1")
    }

    /// The Hessian at the minimizer.
    pub fn hessian(&self) -> DMatrix<f64> {
        let diag = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        match &self.basis {
            Some(q) => q * diag * q.transpose(),
            None => diag,
        }
    }

    fn local(&self, w: &[f64]) -> Vec<f64> {
        let shifted: Vec<f64> = w.iter().zip(&self.minimizer).map(|(a, b)| a - b).collect();
        match &self.basis {
            Some(q) => (q.transpose() * DVector::from_vec(shifted)).as_slice().to_vec(),
            None => shifted,
        }
    }

    fn clean(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.eigenvalues)
            .map(|(&xi, &l)| l * phi(self.spec.skew, xi))
            .sum()
    }

    /// Exact gradient of the noise-free loss.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let x = self.local(w);
        let g: Vec<f64> = x
            .iter()
            .zip(&self.eigenvalues)
            .map(|(&xi, &l)| l * phi_prime(self.spec.skew, xi))
            .collect();
        match &self.basis {
            Some(q) => (q * DVector::from_vec(g)).as_slice().to_vec(),
            None => g,
        }
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.spec.d
    }

    fn loss(&self, w: &[f64], stream: &RngStream) -> f64 {
        let x = self.local(w);
        let clean = self.clean(&x);
        if self.spec.noise_std == 0.0 {
            return clean;
        }
        let mut xi = vec![0.0; self.spec.d + 1];
        fill_gaussian(&mut stream.rng(), &mut xi);
        let linear: f64 = xi[1..].iter().zip(&x).map(|(a, b)| a * b).sum();
        clean + self.spec.noise_std * (xi[0] + linear / (self.spec.d as f64).sqrt())
    }

    fn full_loss(&self, w: &[f64]) -> f64 {
        self.clean(&self.local(w))
    }

    fn optimum(&self) -> Option<f64> {
        Some(0.0)
    }

    fn is_stochastic(&self) -> bool {
        self.spec.noise_std > 0.0
    }
}
