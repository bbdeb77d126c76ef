//! Deterministic, hierarchically labelled random streams.
//!
//! Every random draw in a run is addressed by a path of labels from the run
//! seed (generation, candidate, probe, ...). Two draws that share a path see
//! the same numbers; draws on different paths are independent. Evaluation
//! order therefore never affects results, which is what lets population and
//! probe evaluation fan out across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::ParameterVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Child stream addressed by `label`.
    pub fn substream(&self, label: u64) -> Self {
        Self {
            seed: self.seed,
            stream: mix(self.stream ^ mix(label.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

pub(crate) fn fill_gaussian<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

/// d i.i.d. standard-normal draws from the start of `stream`.
pub fn gaussian_vector(stream: &RngStream, d: usize) -> Result<ParameterVector> {
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let mut values = vec![0.0; d];
    fill_gaussian(&mut stream.rng(), &mut values);
    ParameterVector::new(values)
}
