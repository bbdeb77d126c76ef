#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharpzo::{Objective, RngStream};

/// L(w) = ½wᵀHw + bᵀw with a dense symmetric positive-definite H.
pub struct DenseQuadratic {
    pub h: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl DenseQuadratic {
    pub fn random(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let h = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let s: f64 = (0..d).map(|k| a[k][i] * a[k][j]).sum::<f64>() / d as f64;
                        s + if i == j { 0.5 } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        let b = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { h, b }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let h = (0..d)
            .map(|i| (0..d).map(|j| if i == j { diag[i] } else { 0.0 }).collect())
            .collect();
        Self { h, b: vec![0.0; d] }
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        self.h
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| row.iter().zip(w).map(|(h, x)| h * x).sum::<f64>() + bi)
            .collect()
    }
}

impl Objective for DenseQuadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn loss(&self, w: &[f64], _: &RngStream) -> f64 {
        self.full_loss(w)
    }
    fn full_loss(&self, w: &[f64]) -> f64 {
        let hw: f64 = self
            .h
            .iter()
            .zip(w)
            .map(|(row, wi)| wi * row.iter().zip(w).map(|(h, x)| h * x).sum::<f64>())
            .sum();
        0.5 * hw + self.b.iter().zip(w).map(|(b, x)| b * x).sum::<f64>()
    }
    fn is_stochastic(&self) -> bool {
        false
    }
}

pub struct Sphere(pub usize);

impl Objective for Sphere {
    fn dim(&self) -> usize {
        self.0
    }
    fn loss(&self, w: &[f64], _: &RngStream) -> f64 {
        self.full_loss(w)
    }
    fn full_loss(&self, w: &[f64]) -> f64 {
        0.5 * w.iter().map(|v| v * v).sum::<f64>()
    }
    fn optimum(&self) -> Option<f64> {
        Some(0.0)
    }
    fn is_stochastic(&self) -> bool {
        false
    }
}

pub fn relative_error(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = want.iter().map(|b| b * b).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

pub fn mean_and_var(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
