//! Summary statistics computed from run logs alone.

use std::collections::BTreeMap;

use serde::Serialize;
use sharpzo::driver::{fit_log_linear, StepRow};

#[derive(Clone, Debug)]
pub struct RunData {
    pub method: String,
    pub seed: u64,
    pub rows: Vec<StepRow>,
}

impl RunData {
    pub fn final_row(&self) -> &StepRow {
        self.rows.last().expect("logs are non-empty")
    }

    /// Cumulative queries at the first row with `train_loss <= threshold`.
    pub fn queries_to(&self, threshold: f64) -> Option<u64> {
        self.rows.iter().find(|r| r.train_loss <= threshold).map(|r| r.queries)
    }

    /// Slope of `ln(train_loss − L*)` against step over the stage-2 rows.
    pub fn stage2_rate(&self, l_star: f64) -> Option<f64> {
        let (steps, gaps): (Vec<f64>, Vec<f64>) =
            self.rows.iter().filter(|r| r.stage == 2).map(|r| (r.step as f64, r.train_loss - l_star)).unzip();
        if steps.len() < 3 || gaps.iter().any(|g| g.is_nan() || *g <= 0.0) {
            return None;
        }
        fit_log_linear(&steps, &gaps).ok().map(|f| f.rate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdCell {
    pub threshold: f64,
    /// Median over seeds with unreached runs counted as infinite; `None`
    /// when that median is infinite.
    pub median_queries: Option<f64>,
    pub reached: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub final_loss_median: f64,
    pub final_loss_q1: f64,
    pub final_loss_q3: f64,
    pub final_val_median: f64,
    pub final_queries_median: f64,
    pub thresholds: Vec<ThresholdCell>,
    pub rate_median: Option<f64>,
    pub rate_fits: usize,
    /// Paired-seed win rate against each method, by final train loss.
    pub win_rates: BTreeMap<String, Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub l_star: Option<f64>,
    pub thresholds: Vec<f64>,
    pub methods: Vec<MethodSummary>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn median_with_missing(values: &[Option<u64>]) -> Option<f64> {
    let v = sorted(values.iter().map(|q| q.map_or(f64::INFINITY, |q| q as f64)).collect());
    let m = quantile(&v, 0.5);
    m.is_finite().then_some(m)
}

/// Fraction of shared seeds where `a` ends strictly below `b`; ties score ½.
pub fn win_rate(a: &[&RunData], b: &[&RunData]) -> Option<f64> {
    let mut score = 0.0;
    let mut n = 0usize;
    for ra in a {
        if let Some(rb) = b.iter().find(|r| r.seed == ra.seed) {
            let (la, lb) = (ra.final_row().train_loss, rb.final_row().train_loss);
            score += match la.total_cmp(&lb) {
                std::cmp::Ordering::Less => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Greater => 0.0,
            };
            n += 1;
        }
    }
    (n > 0).then(|| score / n as f64)
}

/// Groups runs by method, preserving first-appearance order.
pub fn group_by_method(runs: &[RunData]) -> Vec<(String, Vec<&RunData>)> {
    let mut groups: Vec<(String, Vec<&RunData>)> = Vec::new();
    for run in runs {
        match groups.iter_mut().find(|(m, _)| *m == run.method) {
            Some((_, g)) => g.push(run),
            None => groups.push((run.method.clone(), vec![run])),
        }
    }
    for (_, g) in &mut groups {
        g.sort_by_key(|r| r.seed);
    }
    groups
}

pub fn summarize(runs: &[RunData], thresholds: &[f64], l_star: Option<f64>) -> Summary {
    let groups = group_by_method(runs);
    let methods = groups
        .iter()
        .map(|(method, group)| {
            let losses = sorted(group.iter().map(|r| r.final_row().train_loss).collect());
            let vals = sorted(group.iter().map(|r| r.final_row().val_metric).collect());
            let queries = sorted(group.iter().map(|r| r.final_row().queries as f64).collect());
            let thresholds = thresholds
                .iter()
                .map(|&t| {
                    let per_run: Vec<_> = group.iter().map(|r| r.queries_to(t)).collect();
                    ThresholdCell {
                        threshold: t,
                        median_queries: median_with_missing(&per_run),
                        reached: per_run.iter().flatten().count(),
                    }
                })
                .collect();
            let rates: Vec<f64> = l_star.map_or_else(Vec::new, |ls| group.iter().filter_map(|r| r.stage2_rate(ls)).collect());
            let win_rates = groups
                .iter()
                .filter(|(other, _)| other != method)
                .map(|(other, og)| (other.clone(), win_rate(group, og)))
                .collect();
            MethodSummary {
                method: method.clone(),
                runs: group.len(),
                final_loss_median: quantile(&losses, 0.5),
                final_loss_q1: quantile(&losses, 0.25),
                final_loss_q3: quantile(&losses, 0.75),
                final_val_median: quantile(&vals, 0.5),
                final_queries_median: quantile(&queries, 0.5),
                thresholds,
                rate_fits: rates.len(),
                rate_median: (!rates.is_empty()).then(|| quantile(&sorted(rates), 0.5)),
                win_rates,
            }
        })
        .collect();
    Summary { l_star, thresholds: thresholds.to_vec(), methods }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Summary {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "method",
            "runs",
            "final_loss_median",
            "final_loss_q1",
            "final_loss_q3",
            "final_val_median",
            "final_queries_median",
        ]
        .map(String::from)
        .to_vec();
        for t in &self.thresholds {
            h.push(format!("queries_to_{t}"));
            h.push(format!("reached_{t}"));
        }
        h.extend(["rate_median", "rate_fits", "l_star"].map(String::from));
        h.extend(self.methods.iter().map(|m| format!("win_rate_vs_{}", m.method)));
        h
    }

    pub fn records(&self) -> Vec<Vec<String>> {
        self.methods
            .iter()
            .map(|m| {
                let mut r = vec![
                    m.method.clone(),
                    m.runs.to_string(),
                    m.final_loss_median.to_string(),
                    m.final_loss_q1.to_string(),
                    m.final_loss_q3.to_string(),
                    m.final_val_median.to_string(),
                    m.final_queries_median.to_string(),
                ];
                for c in &m.thresholds {
                    r.push(cell(c.median_queries));
                    r.push(c.reached.to_string());
                }
                r.push(cell(m.rate_median));
                r.push(m.rate_fits.to_string());
                r.push(cell(self.l_star));
                r.extend(self.methods.iter().map(|o| cell(m.win_rates.get(&o.method).copied().flatten())));
                r
            })
            .collect()
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for r in self.records() {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("summary serializes");
        out.push(b'\n');
        out
    }
}
