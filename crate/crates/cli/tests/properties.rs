use proptest::prelude::*;
use sharpzo::driver::StepRow;
use sharpzo_cli::logio::write_log;
use sharpzo_cli::summary::{quantile, summarize, win_rate, RunData};
use sharpzo_cli::{parse_spec, read_log};

fn rows_strategy() -> impl Strategy<Value = Vec<StepRow>> {
    prop::collection::vec((0u64..50, -1e6f64..1e6, any::<bool>(), 0usize..100), 1..40).prop_map(|raw| {
        let mut queries = 0;
        raw.into_iter()
            .enumerate()
            .map(|(i, (dq, loss, nan_sigma, active))| {
                queries += dq;
                StepRow {
                    step: i,
                    stage: (i.min(2)) as u8,
                    queries,
                    train_loss: loss,
                    val_metric: -loss,
                    sigma: if nan_sigma { f64::NAN } else { loss.abs() },
                    active_coords: active,
                    wall_ms: 0.0,
                }
            })
            .collect()
    })
}

fn same(a: &StepRow, b: &StepRow) -> bool {
    let f = |x: f64, y: f64| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan());
    a.step == b.step
        && a.stage == b.stage
        && a.queries == b.queries
        && f(a.train_loss, b.train_loss)
        && f(a.val_metric, b.val_metric)
        && f(a.sigma, b.sigma)
        && a.active_coords == b.active_coords
        && f(a.wall_ms, b.wall_ms)
}

fn run(method: &str, seed: u64, finals: f64) -> RunData {
    let rows = vec![
        StepRow { step: 0, stage: 0, queries: 0, train_loss: 1e9, val_metric: 0.0, sigma: f64::NAN, active_coords: 1, wall_ms: 0.0 },
        StepRow { step: 1, stage: 2, queries: 2, train_loss: finals, val_metric: 0.0, sigma: f64::NAN, active_coords: 1, wall_ms: 0.0 },
    ];
    RunData { method: method.into(), seed, rows }
}

proptest! {
    #[test]
    fn csv_round_trip_is_lossless(rows in rows_strategy()) {
        let mut buf = Vec::new();
        write_log(&rows, &mut buf).unwrap();
        let back = read_log(&buf).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        prop_assert!(rows.iter().zip(&back).all(|(a, b)| same(a, b)));
    }

    #[test]
    fn paired_win_rates_sum_to_one(a in prop::collection::vec(-3i32..3, 1..12), b in prop::collection::vec(-3i32..3, 1..12)) {
        let ra: Vec<_> = a.iter().enumerate().map(|(s, &v)| run("a", s as u64, v as f64)).collect();
        let rb: Vec<_> = b.iter().enumerate().map(|(s, &v)| run("b", s as u64, v as f64)).collect();
        let (ra, rb): (Vec<_>, Vec<_>) = (ra.iter().collect(), rb.iter().collect());
        let ab = win_rate(&ra, &rb).unwrap();
        let ba = win_rate(&rb, &ra).unwrap();
        prop_assert!((ab + ba - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn summary_quartiles_are_ordered(finals in prop::collection::vec(-1e3f64..1e3, 1..20)) {
        let runs: Vec<_> = finals.iter().enumerate().map(|(s, &v)| run("m", s as u64, v)).collect();
        let m = &summarize(&runs, &[], None).methods[0];
        prop_assert!(m.final_loss_q1 <= m.final_loss_median && m.final_loss_median <= m.final_loss_q3);
        let mut sorted = finals.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(quantile(&sorted, 0.0), sorted[0]);
        prop_assert_eq!(quantile(&sorted, 1.0), *sorted.last().unwrap());
    }

    #[test]
    fn spec_parser_never_panics(text in "\\PC{0,200}") {
        let _ = parse_spec(&text);
    }

    #[test]
    fn log_reader_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        let _ = read_log(&bytes);
    }
}
