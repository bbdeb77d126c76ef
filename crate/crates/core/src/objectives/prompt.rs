use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::rng::{fill_gaussian, RngStream};

fn default_batch() -> usize {
    32
}
fn default_gain() -> f64 {
    2.0
}
fn default_noise() -> f64 {
    1.0
}
fn default_margin() -> f64 {
    0.5
}

/// Low-dimensional prompt tuning through a fixed random projection.
///
/// A frozen "text encoder" produces one feature per class,
/// `t_k(w) = c_k + D_k ⊙ (p₀ + γ·A·w/√d)`, where only the d-dimensional `w`
/// is trainable and A ∈ ℝ^{m×d} has i.i.d. standard-normal entries. Samples
/// are scored by `⟨x, t_k(w)⟩` and trained with cross-entropy.
///
/// The point cloud is drawn around the class features of a hidden teacher
/// prompt and filtered to a positive teacher margin, so it is linearly
/// separable in w while w = 0 ("zero-shot") is noticeably worse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    pub d: usize,
    pub m: usize,
    pub classes: usize,
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Minibatch size per evaluation; 0 means full batch.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_gain")]
    pub gain: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

impl PromptSpec {
    pub fn new(d: usize, m: usize, classes: usize, n_samples: usize, seed: u64) -> Self {
        Self {
            d,
            m,
            classes,
            n_samples,
            seed,
            batch_size: default_batch(),
            gain: default_gain(),
            noise: default_noise(),
            margin: default_margin(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PromptTask {
    spec: PromptSpec,
    projection: Vec<f64>,
    teacher: Vec<f64>,
    labels: Vec<usize>,
    /// n × K logits at w = 0.
    base: Vec<f64>,
    /// n × K × d sensitivities of each logit to w.
    sensitivity: Vec<f64>,
    zero_shot_loss: f64,
    zero_shot_accuracy: f64,
}

pub fn make_prompt_task(d: usize, m: usize, classes: usize, n_samples: usize, seed: u64) -> Result<PromptTask> {
    PromptTask::new(PromptSpec::new(d, m, classes, n_samples, seed))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    fill_gaussian(rng, &mut v);
    v.iter_mut().for_each(|x| *x *= scale);
    v
}

impl PromptTask {
    pub fn new(spec: PromptSpec) -> Result<Self> {
        let PromptSpec { d, m, classes: k, n_samples: n, .. } = spec;
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if d >= m {
            return Err(Error::InvalidConfig(format!("need d < m, got d = {d}, m = {m}")));
        }
        if k < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 classes, got {k}")));
        }
        if n == 0 {
            return Err(Error::InvalidConfig("need at least one sample".into()));
        }
        if !(spec.gain > 0.0 && spec.noise >= 0.0 && spec.margin >= 0.0) {
            return Err(Error::InvalidConfig("gain must be positive, noise and margin non-negative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let inv_sqrt_m = 1.0 / (m as f64).sqrt();
        let projection = gaussian(&mut rng, m * d, 1.0); // row-major m × d
        let p0 = gaussian(&mut rng, m, 1.0);
        let anchors: Vec<Vec<f64>> = (0..k).map(|_| gaussian(&mut rng, m, inv_sqrt_m)).collect();
        let gates: Vec<Vec<f64>> = (0..k).map(|_| gaussian(&mut rng, m, inv_sqrt_m)).collect();
        let teacher = gaussian(&mut rng, d, 1.0);

        let project = |w: &[f64]| -> Vec<f64> {
            let scale = spec.gain / (d as f64).sqrt();
            (0..m)
                .map(|j| scale * (0..d).map(|i| projection[j * d + i] * w[i]).sum::<f64>())
                .collect()
        };
        let features = |w: &[f64]| -> Vec<Vec<f64>> {
            let pbar = project(w);
            (0..k)
                .map(|c| (0..m).map(|j| anchors[c][j] + gates[c][j] * (p0[j] + pbar[j])).collect())
                .collect()
        };
        let teacher_features = features(&teacher);
        let zero_features = features(&vec![0.0; d]);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

        let mut labels = Vec::with_capacity(n);
        let mut base = Vec::with_capacity(n * k);
        let mut sensitivity = Vec::with_capacity(n * k * d);
        let mut attempts = 0usize;
        while labels.len() < n {
            attempts += 1;
            if attempts > 1000 * n {
                return Err(Error::InvalidConfig("could not draw a separable point cloud".into()));
            }
            let y = rng.random_range(0..k);
            let noise = gaussian(&mut rng, m, spec.noise);
            let x: Vec<f64> = teacher_features[y].iter().zip(&noise).map(|(t, e)| t + e).collect();
            let own = dot(&x, &teacher_features[y]);
            let margin = (0..k)
                .filter(|&c| c != y)
                .map(|c| own - dot(&x, &teacher_features[c]))
                .fold(f64::INFINITY, f64::min);
            if margin < spec.margin {
                continue;
            }
            labels.push(y);
            let scale = spec.gain / (d as f64).sqrt();
            for c in 0..k {
                base.push(dot(&x, &zero_features[c]));
                let gated: Vec<f64> = (0..m).map(|j| x[j] * gates[c][j]).collect();
                for i in 0..d {
                    sensitivity.push(scale * (0..m).map(|j| gated[j] * projection[j * d + i]).sum::<f64>());
                }
            }
        }

        let mut task = Self {
            spec,
            projection,
            teacher,
            labels,
            base,
            sensitivity,
            zero_shot_loss: 0.0,
            zero_shot_accuracy: 0.0,
        };
        let zeros = vec![0.0; d];
        task.zero_shot_loss = task.full_loss(&zeros);
        task.zero_shot_accuracy = task.accuracy(&zeros);
        Ok(task)
    }

    pub fn spec(&self) -> &PromptSpec {
        &self.spec
    }

    /// The fixed m × d projection, row-major.
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn teacher(&self) -> &[f64] {
        &self.teacher
    }

    pub fn zero_shot_loss(&self) -> f64 {
        self.zero_shot_loss
    }

    pub fn zero_shot_accuracy(&self) -> f64 {
        self.zero_shot_accuracy
    }

    fn logits(&self, n: usize, w: &[f64], out: &mut [f64]) {
        let (k, d) = (self.spec.classes, self.spec.d);
        for c in 0..k {
            let row = &self.sensitivity[(n * k + c) * d..(n * k + c + 1) * d];
            out[c] = self.base[n * k + c] + row.iter().zip(w).map(|(s, x)| s * x).sum::<f64>();
        }
    }

    fn cross_entropy(&self, n: usize, w: &[f64], scratch: &mut [f64]) -> f64 {
        self.logits(n, w, scratch);
        let max = scratch.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scratch.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        lse - scratch[self.labels[n]]
    }

    /// Full-data accuracy; ties resolve to the lowest class index.
    pub fn accuracy(&self, w: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.spec.classes];
        let correct = (0..self.labels.len())
            .filter(|&n| {
                self.logits(n, w, &mut scratch);
                let mut best = 0;
                for c in 1..scratch.len() {
                    if scratch[c] > scratch[best] {
                        best = c;
                    }
                }
                best == self.labels[n]
            })
            .count();
        correct as f64 / self.labels.len() as f64
    }
}

impl Objective for PromptTask {
    fn dim(&self) -> usize {
        self.spec.d
    }

    fn loss(&self, w: &[f64], stream: &RngStream) -> f64 {
        let n = self.labels.len();
        let batch = self.spec.batch_size;
        if batch == 0 || batch >= n {
            return self.full_loss(w);
        }
        let mut rng = stream.rng();
        let mut scratch = vec![0.0; self.spec.classes];
        let total: f64 = (0..batch)
            .map(|_| self.cross_entropy(rng.random_range(0..n), w, &mut scratch))
            .sum();
        total / batch as f64
    }

    fn full_loss(&self, w: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.spec.classes];
        let n = self.labels.len();
        (0..n).map(|i| self.cross_entropy(i, w, &mut scratch)).sum::<f64>() / n as f64
    }

    fn validation_metric(&self, w: &[f64]) -> f64 {
        self.accuracy(w)
    }

    fn is_stochastic(&self) -> bool {
        self.spec.batch_size != 0 && self.spec.batch_size < self.labels.len()
    }
}
