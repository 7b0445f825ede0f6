//! Transfer-learning loop for the single-view classifier.
//!
//! The head's feature standardisation is fitted once, on the un-augmented
//! training features of the initial backbone. Loss is binary cross-entropy,
//! optimised with Adam on mini-batches. When every backbone layer is frozen
//! the features are computed once and cached.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::classifier::{sigmoid, Head, SingleViewModel};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::types::{Label, View};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub frozen_fraction: f64,
    pub augment: bool,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 8,
            frozen_fraction: 1.0,
            augment: false,
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(alloc::format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.frozen_fraction) {
            return bad(alloc::format!("frozen_fraction must lie in [0,1], got {}", self.frozen_fraction));
        }
        if self.batch_size == 0 {
            return bad(String::from("batch_size must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(alloc::format!("threshold must lie in [0,1], got {}", self.threshold));
        }
        Ok(())
    }

    /// Number of backbone layers, counted from the input, kept fixed.
    pub fn frozen_layers(&self, depth: usize) -> usize {
        (libm::floor(self.frozen_fraction * depth as f64 + 1e-9) as usize).min(depth)
    }
}

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub patient_id: String,
    pub input: Tensor,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<B> {
    pub model: SingleViewModel<B>,
    pub log: Vec<EpochLog>,
}

struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(lr: f64, sizes: &[usize]) -> Self {
        Adam {
            lr,
            t: 0,
            m: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            v: sizes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    fn step(&mut self, group: usize, params: &mut [f64], grads: &[f64]) {
        let c1 = 1.0 - libm::pow(Self::B1, self.t as f64);
        let c2 = 1.0 - libm::pow(Self::B2, self.t as f64);
        let (m, v) = (&mut self.m[group], &mut self.v[group]);
        for k in 0..params.len() {
            m[k] = Self::B1 * m[k] + (1.0 - Self::B1) * grads[k];
            v[k] = Self::B2 * v[k] + (1.0 - Self::B2) * grads[k] * grads[k];
            params[k] -= self.lr * (m[k] / c1) / (libm::sqrt(v[k] / c2) + Self::EPS);
        }
    }
}

/// Numerically stable `-[y ln p + (1-y) ln(1-p)]` with `p = sigmoid(z)`.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + libm::log1p(libm::exp(-libm::fabs(z)))
}

pub fn accuracy<B: Backbone>(model: &SingleViewModel<B>, samples: &[TrainSample]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let correct = samples
        .iter()
        .filter(|s| model.call(model.score_tensor(&s.input)) == s.label)
        .count();
    Some(correct as f64 / samples.len() as f64)
}

/// Fits the head (and any unfrozen backbone layers) on `train`.
///
/// `observer` sees the patient id of every sample that contributes to a
/// gradient step, which lets callers audit data hygiene.
pub fn train_classifier<B: Backbone>(
    backbone: B,
    view: View,
    train: &[TrainSample],
    validation: &[TrainSample],
    config: &TrainConfig,
    observer: &mut dyn FnMut(&str),
) -> Result<TrainOutcome<B>> {
    config.validate()?;
    let has_defect = train.iter().any(|s| s.label.is_defect());
    let has_healthy = train.iter().any(|s| !s.label.is_defect());
    if !(has_defect && has_healthy) {
        return Err(Error::SingleClassTrainingSet);
    }
    let dim = backbone.spec().feature_dim;
    let depth = backbone.depth();
    let first_trainable = config.frozen_layers(depth);
    let all_frozen = first_trainable == depth;

    let initial: Vec<Vec<f64>> = train.iter().map(|s| backbone.features(&s.input)).collect();
    let n = initial.len() as f64;
    let mut head = Head::untrained(dim);
    for d in 0..dim {
        let mean = initial.iter().map(|f| f[d]).sum::<f64>() / n;
        let var = initial.iter().map(|f| (f[d] - mean) * (f[d] - mean)).sum::<f64>() / n;
        let sd = libm::sqrt(var);
        head.mean[d] = mean;
        head.scale[d] = if sd > 1e-12 { sd } else { 1.0 };
    }

    // Feature cache for frozen backbones: [plain, flipped] per sample.
    let cache: Vec<[Vec<f64>; 2]> = if all_frozen {
        train
            .iter()
            .zip(initial)
            .map(|(s, plain)| {
                let flipped = if config.augment {
                    backbone.features(&s.input.flipped_horizontally())
                } else {
                    Vec::new()
                };
                [plain, flipped]
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut model = SingleViewModel { view, backbone, head, threshold: config.threshold };
    let mut group_sizes = vec![dim, 1];
    group_sizes.extend((first_trainable..depth).map(|l| model.backbone.layer_params(l).len()));
    let mut adam = Adam::new(config.learning_rate, &group_sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut g_w = vec![0.0; dim];
            let mut g_b = 0.0;
            let mut g_layers: Vec<Vec<f64>> = group_sizes[2..].iter().map(|n| vec![0.0; *n]).collect();
            for &i in batch {
                let sample = &train[i];
                let flip = config.augment && rng.random_bool(0.5);
                observer(&sample.patient_id);
                let y = if sample.label.is_defect() { 1.0 } else { 0.0 };

                let (features, trace) = if all_frozen {
                    (cache[i][usize::from(flip)].clone(), None)
                } else {
                    let input = if flip { sample.input.flipped_horizontally() } else { sample.input.clone() };
                    let (f, t) = model.backbone.forward(&input);
                    (f, Some(t))
                };
                let z = model.head.logit(&features);
                epoch_loss += bce_with_logit(z, y);
                let dz = sigmoid(z) - y;
                let standardized = model.head.standardize(&features);
                for d in 0..dim {
                    g_w[d] += dz * standardized[d];
                }
                g_b += dz;
                if let Some(trace) = trace {
                    let d_feat: Vec<f64> = model.head.feature_gradient().iter().map(|g| g * dz).collect();
                    let back = model.backbone.backward(&trace, &d_feat, first_trainable, false);
                    for (acc, g) in g_layers.iter_mut().zip(back.params) {
                        acc.iter_mut().zip(g).for_each(|(a, g)| *a += g);
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            g_w.iter_mut().for_each(|g| *g *= inv);
            adam.t += 1;
            adam.step(0, &mut model.head.weights, &g_w);
            let mut bias = [model.head.bias];
            adam.step(1, &mut bias, &[g_b * inv]);
            model.head.bias = bias[0];
            for (k, layer) in (first_trainable..depth).enumerate() {
                g_layers[k].iter_mut().for_each(|g| *g *= inv);
                adam.step(2 + k, model.backbone.layer_params_mut(layer), &g_layers[k]);
            }
        }
        log.push(EpochLog {
            epoch,
            loss: epoch_loss / n,
            validation_accuracy: accuracy(&model, validation),
        });
    }
    Ok(TrainOutcome { model, log })
}
