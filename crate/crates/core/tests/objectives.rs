use sharpzo::driver::{run, RunConfig};
use sharpzo::estimators::cge_estimate;
use sharpzo::objectives::{make_prompt_task, make_quadratic, make_two_basin, Basin};
use sharpzo::{Evaluator, Objective, Phase, QueryCounter, RngStream};

/// Trace of the Hessian from central differences of central differences.
fn hessian_trace(obj: &dyn Objective, w: &[f64], h: f64) -> f64 {
    let counter = QueryCounter::new();
    let eval = Evaluator::new(obj, &counter, Phase::Stage1);
    let s = RngStream::new(0, 0);
    (0..w.len())
        .map(|i| {
            let mut plus = w.to_vec();
            let mut minus = w.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let gp = cge_estimate(&eval, &plus, 1e-4, &s).unwrap().grad[i];
            let gm = cge_estimate(&eval, &minus, 1e-4, &s).unwrap().grad[i];
            (gp - gm) / (2.0 * h)
        })
        .sum()
}

#[test]
fn sharp_basin_is_sharper_by_the_ratio() {
    for seed in 0..5 {
        let obj = make_two_basin(3, 80.0, 0.1, seed).unwrap();
        let a = obj.sharp_center().to_vec();
        let b = obj.flat_center().to_vec();
        assert!((obj.full_loss(&a) + 0.1).abs() < 1e-12);
        assert!(obj.full_loss(&b).abs() < 1e-12);
        let ta = hessian_trace(&obj, &a, 1e-3);
        let tb = hessian_trace(&obj, &b, 1e-3);
        assert!((ta - 240.0).abs() < 1e-2 * 240.0, "{ta}");
        assert!((tb - 3.0).abs() < 1e-2 * 3.0, "{tb}");
        assert!(ta / tb >= 80.0 * 0.99);
        assert_eq!(obj.basin(&a), Basin::Sharp);
        assert_eq!(obj.basin(&b), Basin::Flat);
    }
}

#[test]
fn quadratic_constants() {
    let obj = make_quadratic(10, 50.0, 0.0, 2).unwrap();
    assert_eq!(obj.pl_constant(), 1.0);
    assert!((obj.l_smooth() - 50.0).abs() < 1e-12);
    assert_eq!(obj.full_loss(obj.minimizer()), 0.0);
    let noisy = make_quadratic(10, 50.0, 0.3, 2).unwrap();
    let at_min = noisy.loss(noisy.minimizer(), &RngStream::new(1, 1));
    assert!(at_min.abs() < 5.0 * 0.3);
}

#[test]
fn prompt_tuning_beats_zero_shot() {
    let wins = (0..20)
        .filter(|&seed| {
            let obj = make_prompt_task(32, 256, 4, 400, seed).unwrap();
            let c = RunConfig {
                seed,
                budget: Some(5000),
                total_steps: 5000,
                ..RunConfig::new(32)
            };
            let log = run(&c, &obj).unwrap();
            let acc = log.final_row().val_metric;
            assert!((0.0..=1.0).contains(&acc));
            acc >= obj.zero_shot_accuracy() + 0.1
        })
        .count();
    assert!(wins >= 18, "{wins}/20");
}
