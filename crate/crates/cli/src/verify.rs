//! Self-checks runnable without a test harness: estimator exactness and
//! mask sparsity on seeded random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sharpzo::estimators::{cge_estimate, rge_estimate, sam_perturbation, MaskProjection, DEFAULT_TAU};
use sharpzo::objectives::{Quadratic, QuadraticSpec};
use sharpzo::pruning::{build_mask, build_mask_literal, magnitude_mask, pruned_count, zscore};
use sharpzo::{Evaluator, Phase, QueryCounter, RngStream};

const CASES: u64 = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, failures: Vec<String>, ok_detail: String) -> Check {
    match failures.first() {
        None => Check { name, passed: true, detail: ok_detail },
        Some(first) => Check { name, passed: false, detail: format!("{} failing case(s); first: {first}", failures.len()) },
    }
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn cge_exactness() -> Check {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let d = rng.random_range(1..=24);
        let spec = QuadraticSpec {
            d,
            condition_number: rng.random_range(1.0..100.0),
            noise_std: 0.0,
            seed: case,
            rotated: true,
            skew: 0.0,
        };
        let obj = match Quadratic::new(spec) {
            Ok(o) => o,
            Err(e) => {
                failures.push(format!("case {case}: {e}"));
                continue;
            }
        };
        let w: Vec<f64> = gaussian(&mut rng, d).iter().map(|v| 2.0 * v).collect();
        let mu = 10f64.powf(rng.random_range(-5.0..-2.0));
        let counter = QueryCounter::new();
        let eval = Evaluator::new(&obj, &counter, Phase::Stage1);
        match cge_estimate(&eval, &w, mu, &RngStream::new(case, 0)) {
            Ok(g) => {
                let exact = obj.gradient(&w);
                let num: f64 = g.grad.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let den = exact.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                let rel = num / den;
                worst = worst.max(rel);
                if rel >= 1e-8 || counter.total() != 2 * d as u64 {
                    failures.push(format!("case {case}: d = {d}, relative error {rel:.3e}, {} queries", counter.total()));
                }
            }
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    check("cge exact on quadratics", failures, format!("{CASES} cases, worst relative error {worst:.2e}"))
}

fn rge_query_count() -> Check {
    let mut failures = Vec::new();
    for case in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let d = rng.random_range(1..=16);
        let q = rng.random_range(1..=8);
        let obj = Quadratic::new(QuadraticSpec { d, condition_number: 10.0, noise_std: 0.0, seed: case, rotated: false, skew: 0.0 })
            .expect("valid quadratic");
        let counter = QueryCounter::new();
        let eval = Evaluator::new(&obj, &counter, Phase::Stage2);
        let mask: Vec<bool> = (0..d).map(|i| i % 2 == 0).collect();
        let w = gaussian(&mut rng, d);
        match rge_estimate(&eval, &w, 1e-3, q, &RngStream::new(case, 2), Some(&mask), MaskProjection::default()) {
            Ok(g) => {
                if counter.total() != 2 * q as u64 || g.queries_used != 2 * q as u64 {
                    failures.push(format!("case {case}: q = {q}, {} queries", counter.total()));
                }
                if g.grad.iter().zip(&mask).any(|(v, m)| !m && *v != 0.0) {
                    failures.push(format!("case {case}: masked coordinate received gradient"));
                }
            }
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    check("rge costs 2q queries and respects the mask", failures, format!("{CASES} cases"))
}

fn sam_radius() -> Check {
    let mut failures = Vec::new();
    for case in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + case);
        let d = rng.random_range(1..=32);
        let g = gaussian(&mut rng, d);
        let rho = rng.random_range(0.0..1.0);
        let eps = sam_perturbation(&g, rho, DEFAULT_TAU);
        let norm = eps.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - rho).abs() > 1e-12 * rho.max(1.0) {
            failures.push(format!("case {case}: norm {norm} vs rho {rho}"));
        }
    }
    let zero = sam_perturbation(&[0.0; 4], 0.5, DEFAULT_TAU);
    if zero.iter().any(|v| *v != 0.0) {
        failures.push("zero gradient gave a non-zero perturbation".into());
    }
    check("sam perturbation has radius rho", failures, format!("{CASES} cases"))
}

fn mask_sparsity() -> Check {
    let mut failures = Vec::new();
    for case in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + case);
        let d = rng.random_range(1..=200);
        let s = rng.random_range(0.0..0.95);
        let w = gaussian(&mut rng, d);
        let fisher: Vec<f64> = gaussian(&mut rng, d).iter().map(|v| v * v).collect();
        let grad = gaussian(&mut rng, d);
        let want = d - pruned_count(d, s);
        let masks = [
            ("zscore", build_mask(&w, &fisher, s)),
            ("literal", build_mask_literal(&w, &fisher, &grad, s)),
            ("magnitude", magnitude_mask(&w, s)),
        ];
        for (name, m) in masks {
            match m {
                Ok(m) if m.active_count() == want => {}
                Ok(m) => failures.push(format!("case {case}: {name} kept {} of {d}, expected {want}", m.active_count())),
                Err(e) => failures.push(format!("case {case}: {name}: {e}")),
            }
        }
        let z = zscore(&fisher);
        let mean = z.iter().sum::<f64>() / d as f64;
        if d > 1 && mean.abs() > 1e-9 {
            failures.push(format!("case {case}: zscore mean {mean}"));
        }
    }
    check("masks freeze exactly round(s*d) coordinates", failures, format!("{CASES} cases"))
}

pub fn run_all() -> Vec<Check> {
    vec![cge_exactness(), rge_query_count(), sam_radius(), mask_sparsity()]
}
