use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::rng::{fill_gaussian, RngStream};

fn default_separation() -> f64 {
    1.0
}

fn default_temperature() -> f64 {
    0.01
}

/// A deep narrow well next to a shallow wide one.
///
/// q_sharp(w) = −gap + ½·ratio·‖w − a‖², q_flat(w) = ½‖w − b‖², and L is
/// their smooth minimum `m − κ·ln(1 + e^{−|q_sharp − q_flat|/κ})`, which is
/// C^∞ and equals the exact minimum to machine precision at both centres.
/// The sharp centre a is the origin (where the default initializer lands);
/// b sits `separation` away along a seeded random direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoBasinSpec {
    pub d: usize,
    pub curvature_ratio: f64,
    pub depth_gap: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basin {
    Sharp,
    Flat,
}

#[derive(Clone, Debug)]
pub struct TwoBasin {
    spec: TwoBasinSpec,
    sharp_center: Vec<f64>,
    flat_center: Vec<f64>,
}

pub fn make_two_basin(d: usize, curvature_ratio: f64, depth_gap: f64, seed: u64) -> Result<TwoBasin> {
    TwoBasin::new(TwoBasinSpec {
        d,
        curvature_ratio,
        depth_gap,
        seed,
        separation: default_separation(),
        temperature: default_temperature(),
    })
}

impl TwoBasin {
    pub fn new(spec: TwoBasinSpec) -> Result<Self> {
        if spec.d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if !(spec.curvature_ratio >= 50.0 && spec.curvature_ratio.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "curvature ratio must be ≥ 50, got {}",
                spec.curvature_ratio
            )));
        }
        if !(spec.depth_gap > 0.0 && spec.separation > 0.0 && spec.temperature > 0.0) {
            return Err(Error::InvalidConfig(
                "depth gap, separation and temperature must be positive".into(),
            ));
        }
        // Both centres must sit far inside their own branch of the minimum.
        let sep2 = spec.separation * spec.separation;
        let margin_sharp = 0.5 * sep2 + spec.depth_gap;
        let margin_flat = 0.5 * spec.curvature_ratio * sep2 - spec.depth_gap;
        if margin_sharp.min(margin_flat) < 50.0 * spec.temperature {
            return Err(Error::InvalidConfig(format!(
                "wells overlap: separation {} is too small for gap {} and temperature {}",
                spec.separation, spec.depth_gap, spec.temperature
            )));
        }
        let mut dir = vec![0.0; spec.d];
        fill_gaussian(&mut ChaCha8Rng::seed_from_u64(spec.seed), &mut dir);
        let norm = crate::vector::norm2(&dir);
        let flat_center = dir.iter().map(|v| v / norm * spec.separation).collect();
        Ok(Self {
            sharp_center: vec![0.0; spec.d],
            flat_center,
            spec,
        })
    }

    pub fn spec(&self) -> &TwoBasinSpec {
        &self.spec
    }

    pub fn sharp_center(&self) -> &[f64] {
        &self.sharp_center
    }

    pub fn flat_center(&self) -> &[f64] {
        &self.flat_center
    }

    fn wells(&self, w: &[f64]) -> (f64, f64) {
        let da: f64 = w.iter().zip(&self.sharp_center).map(|(x, c)| (x - c).powi(2)).sum();
        let db: f64 = w.iter().zip(&self.flat_center).map(|(x, c)| (x - c).powi(2)).sum();
        (
            -self.spec.depth_gap + 0.5 * self.spec.curvature_ratio * da,
            0.5 * db,
        )
    }

    /// Which well's branch `w` lies on.
    pub fn basin(&self, w: &[f64]) -> Basin {
        let (sharp, flat) = self.wells(w);
        if sharp < flat {
            Basin::Sharp
        } else {
            Basin::Flat
        }
    }
}

impl Objective for TwoBasin {
    fn dim(&self) -> usize {
        self.spec.d
    }

    fn loss(&self, w: &[f64], _: &RngStream) -> f64 {
        self.full_loss(w)
    }

    fn full_loss(&self, w: &[f64]) -> f64 {
        let (a, b) = self.wells(w);
        let k = self.spec.temperature;
        a.min(b) - k * (-(a - b).abs() / k).exp().ln_1p()
    }

    fn optimum(&self) -> Option<f64> {
        Some(-self.spec.depth_gap)
    }

    fn is_stochastic(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_values_at_centres() {
        let tb = make_two_basin(4, 100.0, 0.1, 7).unwrap();
        assert_eq!(tb.full_loss(tb.sharp_center()), -0.1);
        assert_eq!(tb.full_loss(tb.flat_center()), 0.0);
        assert_eq!(tb.basin(tb.sharp_center()), Basin::Sharp);
        assert_eq!(tb.basin(tb.flat_center()), Basin::Flat);
        assert!((crate::vector::norm2(tb.flat_center()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_two_basin(2, 10.0, 0.1, 0).is_err());
        assert!(make_two_basin(2, 100.0, 0.0, 0).is_err());
        assert!(make_two_basin(2, 100.0, 60.0, 0).is_err());
    }

    #[test]
    fn centres_are_local_minima() {
        let tb = make_two_basin(3, 60.0, 0.2, 1).unwrap();
        for center in [tb.sharp_center().to_vec(), tb.flat_center().to_vec()] {
            let f0 = tb.full_loss(&center);
            for i in 0..3 {
                for h in [-1e-3, 1e-3] {
                    let mut w = center.clone();
                    w[i] += h;
                    assert!(tb.full_loss(&w) > f0);
                }
            }
        }
    }
}
