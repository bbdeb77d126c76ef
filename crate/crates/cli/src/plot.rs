//! Static SVG convergence charts: per-method median curve with an IQR band.

use std::fmt::Write;

use crate::summary::{quantile, RunData};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const GRID_POINTS: usize = 200;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Series {
    /// Train loss, or the gap to L* when it is known.
    Loss,
    Validation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub method: String,
    pub x: Vec<f64>,
    pub median: Vec<f64>,
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
}

fn value(row: &sharpzo::driver::StepRow, series: Series, l_star: Option<f64>) -> f64 {
    match series {
        Series::Loss => row.train_loss - l_star.unwrap_or(0.0),
        Series::Validation => row.val_metric,
    }
}

/// Latest logged value at or before `x` cumulative queries.
fn value_at(run: &RunData, x: f64, series: Series, l_star: Option<f64>) -> f64 {
    let idx = run.rows.partition_point(|r| r.queries as f64 <= x);
    value(&run.rows[idx.saturating_sub(1)], series, l_star)
}

pub fn bands(groups: &[(String, Vec<&RunData>)], series: Series, l_star: Option<f64>) -> Vec<Band> {
    let x_max = groups
        .iter()
        .flat_map(|(_, g)| g.iter().map(|r| r.final_row().queries))
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let x: Vec<f64> = (0..GRID_POINTS).map(|i| x_max * i as f64 / (GRID_POINTS - 1) as f64).collect();
    groups
        .iter()
        .map(|(method, runs)| {
            let mut band = Band { method: method.clone(), x: x.clone(), median: vec![], q1: vec![], q3: vec![] };
            for &xi in &x {
                let mut v: Vec<f64> = runs.iter().map(|r| value_at(r, xi, series, l_star)).collect();
                v.sort_by(f64::total_cmp);
                band.median.push(quantile(&v, 0.5));
                band.q1.push(quantile(&v, 0.25));
                band.q3.push(quantile(&v, 0.75));
            }
            band
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, allow_log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self { lo: 0.0, hi: 1.0, log: false };
        }
        if allow_log && lo > 0.0 && hi / lo > 20.0 {
            return Self { lo: lo.log10().floor(), hi: hi.log10().ceil().max(lo.log10().floor() + 1.0), log: true };
        }
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            return Self { lo: lo - 0.5, hi: hi + 0.5, log: false };
        }
        let pad = 0.05 * (hi - lo);
        Self { lo: lo - pad, hi: hi + pad, log: false }
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.max(1e-300).log10() } else { v };
        ((v - self.lo) / (self.hi - self.lo)).clamp(-0.05, 1.05)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo as i32, self.hi as i32);
            let stride = ((b - a) / 8).max(1);
            (a..=b).step_by(stride as usize).map(|e| (10f64.powi(e), format!("1e{e}"))).collect()
        } else {
            (0..=5)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (v, format!("{}", (v * 1e4).round() / 1e4))
                })
                .collect()
        }
    }
}

pub fn render(bands: &[Band], title: &str, y_label: &str, allow_log: bool) -> String {
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let x_max = bands.first().and_then(|b| b.x.last().copied()).unwrap_or(1.0);
    let y = Axis::fit(bands.iter().flat_map(|b| b.q1.iter().chain(&b.q3).chain(&b.median).copied()), allow_log);
    let sx = |v: f64| LEFT + pw * v / x_max;
    let sy = |v: f64| TOP + ph * (1.0 - y.unit(v));

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

    for (v, label) in y.ticks() {
        let py = sy(v);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 6.0, py + 4.0);
    }
    for i in 0..=5 {
        let v = x_max * i as f64 / 5.0;
        let px = sx(v);
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, v.round());
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">cumulative queries</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );

    for (k, band) in bands.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut area = String::new();
        for (x, v) in band.x.iter().zip(&band.q3) {
            let _ = write!(area, "{:.2},{:.2} ", sx(*x), sy(*v));
        }
        for (x, v) in band.x.iter().zip(&band.q1).rev() {
            let _ = write!(area, "{:.2},{:.2} ", sx(*x), sy(*v));
        }
        let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, area.trim_end());
        let mut line = String::new();
        for (x, v) in band.x.iter().zip(&band.median) {
            let _ = write!(line, "{:.2},{:.2} ", sx(*x), sy(*v));
        }
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.trim_end());
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&band.method));
    }
    s.push_str("</svg>\n");
    s
}
