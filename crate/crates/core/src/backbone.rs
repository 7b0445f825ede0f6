//! Feature-extractor backbones.
//!
//! A backbone maps a preprocessed `C x S x S` tensor to a global-pooled
//! feature vector and can back-propagate a feature gradient to its input and
//! to its own parameters. Only the `tiny-test` provider ships with this
//! crate: two 3x3 tanh convolutions around a 2x2 average pool, with weights
//! drawn from a fixed seed so every build sees the same "pretrained" net.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{letterbox, GrayImage};
use crate::tensor::Tensor;

pub const TINY_TEST: &str = "tiny-test";
const PRETRAINED_SEED: u64 = 0x0c0f_fee5_ca77_1a9e;
const TINY_CHANNELS: [usize; 3] = [3, 8, 16];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub name: String,
    pub input_size: usize,
    pub feature_dim: usize,
    pub pretrained: bool,
}

impl BackboneSpec {
    pub fn tiny_test(input_size: usize) -> Self {
        BackboneSpec {
            name: TINY_TEST.to_string(),
            input_size,
            feature_dim: TINY_CHANNELS[2],
            pretrained: true,
        }
    }

    pub fn xception() -> Self {
        BackboneSpec { name: "xception".to_string(), input_size: 299, feature_dim: 2048, pretrained: true }
    }
}

/// Result of [`Backbone::backward`].
#[derive(Debug, Clone)]
pub struct Backward {
    /// Gradient with respect to the preprocessed input, when requested.
    pub input: Option<Tensor>,
    /// Parameter gradients for layers `first_param_layer..depth`, in order.
    pub params: Vec<Vec<f64>>,
}

pub trait Backbone {
    type Trace;

    fn spec(&self) -> &BackboneSpec;

    /// Channels of the preprocessed input.
    fn input_channels(&self) -> usize;

    /// Trainable layers, counted from the input.
    fn depth(&self) -> usize;

    fn forward(&self, input: &Tensor) -> (Vec<f64>, Self::Trace);

    fn features(&self, input: &Tensor) -> Vec<f64> {
        self.forward(input).0
    }

    fn backward(&self, trace: &Self::Trace, feature_grad: &[f64], first_param_layer: usize, want_input: bool) -> Backward;

    fn layer_params(&self, layer: usize) -> &[f64];

    fn layer_params_mut(&mut self, layer: usize) -> &mut [f64];
}

/// Letterbox to the backbone's input size, replicate grayscale across its
/// channels and map intensities from `[0, 1]` to `[-1, 1]`.
pub fn preprocess<B: Backbone + ?Sized>(backbone: &B, image: &GrayImage) -> Result<Tensor> {
    if image.width == 0 || image.height == 0 || image.pixels.len() != image.width * image.height {
        return Err(Error::BadImageShape { width: image.width, height: image.height });
    }
    let size = backbone.spec().input_size;
    let boxed = letterbox(image, size);
    let channels = backbone.input_channels();
    let mut t = Tensor::zeros(channels, size, size);
    let plane = size * size;
    for c in 0..channels {
        for (dst, src) in t.data[c * plane..(c + 1) * plane].iter_mut().zip(&boxed.pixels) {
            *dst = 2.0 * src - 1.0;
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Conv3x3 {
    in_channels: usize,
    out_channels: usize,
    /// `[out][in][3][3]` weights followed by `out` biases.
    params: Vec<f64>,
}

impl Conv3x3 {
    fn init(in_channels: usize, out_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let n_w = out_channels * in_channels * 9;
        let limit = libm::sqrt(6.0 / ((in_channels + out_channels) * 9) as f64);
        let mut params: Vec<f64> = (0..n_w).map(|_| rng.random_range(-limit..limit)).collect();
        params.extend((0..out_channels).map(|_| rng.random_range(-0.1..0.1)));
        Conv3x3 { in_channels, out_channels, params }
    }

    #[inline]
    fn w(&self, o: usize, i: usize, k: usize) -> f64 {
        self.params[(o * self.in_channels + i) * 9 + k]
    }

    fn bias(&self, o: usize) -> f64 {
        self.params[self.out_channels * self.in_channels * 9 + o]
    }

    /// Same-padded convolution followed by tanh.
    fn forward(&self, input: &Tensor) -> Tensor {
        let (h, w) = (input.height, input.width);
        let mut out = Tensor::zeros(self.out_channels, h, w);
        for o in 0..self.out_channels {
            let b = self.bias(o);
            for y in 0..h {
                for x in 0..w {
                    let mut acc = b;
                    for i in 0..self.in_channels {
                        for ky in 0..3 {
                            let iy = y + ky;
                            if iy == 0 || iy > h {
                                continue;
                            }
                            for kx in 0..3 {
                                let ix = x + kx;
                                if ix == 0 || ix > w {
                                    continue;
                                }
                                acc += self.w(o, i, ky * 3 + kx) * input.get(i, iy - 1, ix - 1);
                            }
                        }
                    }
                    let idx = out.idx(o, y, x);
                    out.data[idx] = libm::tanh(acc);
                }
            }
        }
        out
    }

    /// Back-propagates through tanh and the convolution.
    fn backward(&self, input: &Tensor, act: &Tensor, d_act: &Tensor, want_input: bool, want_params: bool) -> (Option<Tensor>, Option<Vec<f64>>) {
        let (h, w) = (input.height, input.width);
        let mut d_in = want_input.then(|| Tensor::zeros(self.in_channels, h, w));
        let mut d_params = want_params.then(|| vec![0.0; self.params.len()]);
        let bias_offset = self.out_channels * self.in_channels * 9;
        for o in 0..self.out_channels {
            for y in 0..h {
                for x in 0..w {
                    let a = act.get(o, y, x);
                    let d_pre = d_act.get(o, y, x) * (1.0 - a * a);
                    if d_pre == 0.0 {
                        continue;
                    }
                    if let Some(dp) = d_params.as_mut() {
                        dp[bias_offset + o] += d_pre;
                    }
                    for i in 0..self.in_channels {
                        for ky in 0..3 {
                            let iy = y + ky;
                            if iy == 0 || iy > h {
                                continue;
                            }
                            for kx in 0..3 {
                                let ix = x + kx;
                                if ix == 0 || ix > w {
                                    continue;
                                }
                                let k = ky * 3 + kx;
                                if let Some(dp) = d_params.as_mut() {
                                    dp[(o * self.in_channels + i) * 9 + k] += d_pre * input.get(i, iy - 1, ix - 1);
                                }
                                if let Some(di) = d_in.as_mut() {
                                    let idx = di.idx(i, iy - 1, ix - 1);
                                    di.data[idx] += d_pre * self.w(o, i, k);
                                }
                            }
                        }
                    }
                }
            }
        }
        (d_in, d_params)
    }
}

fn avg_pool2(input: &Tensor) -> Tensor {
    let (h, w) = (input.height / 2, input.width / 2);
    let mut out = Tensor::zeros(input.channels, h, w);
    for c in 0..input.channels {
        for y in 0..h {
            for x in 0..w {
                let s = input.get(c, 2 * y, 2 * x)
                    + input.get(c, 2 * y, 2 * x + 1)
                    + input.get(c, 2 * y + 1, 2 * x)
                    + input.get(c, 2 * y + 1, 2 * x + 1);
                let idx = out.idx(c, y, x);
                out.data[idx] = s / 4.0;
            }
        }
    }
    out
}

fn avg_pool2_backward(d_out: &Tensor, height: usize, width: usize) -> Tensor {
    let mut d_in = Tensor::zeros(d_out.channels, height, width);
    for c in 0..d_out.channels {
        for y in 0..d_out.height {
            for x in 0..d_out.width {
                let g = d_out.get(c, y, x) / 4.0;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let idx = d_in.idx(c, 2 * y + dy, 2 * x + dx);
                    d_in.data[idx] += g;
                }
            }
        }
    }
    d_in
}

/// Activations kept for back-propagation.
#[derive(Debug, Clone)]
pub struct TinyTrace {
    input: Tensor,
    conv1: Tensor,
    pooled: Tensor,
    conv2: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyBackbone {
    spec: BackboneSpec,
    layers: Vec<Conv3x3>,
}

impl TinyBackbone {
    /// Pretrained specs use the fixed provider seed; otherwise `seed`.
    pub fn new(spec: BackboneSpec, seed: u64) -> Result<Self> {
        if spec.name != TINY_TEST {
            return Err(Error::BackboneUnavailable(spec.name));
        }
        if spec.input_size < 4 || !spec.input_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(alloc::format!(
                "tiny-test input_size must be even and >= 4, got {}",
                spec.input_size
            )));
        }
        if spec.feature_dim != TINY_CHANNELS[2] {
            return Err(Error::InvalidConfig(alloc::format!(
                "tiny-test feature_dim is {}, got {}",
                TINY_CHANNELS[2],
                spec.feature_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(if spec.pretrained { PRETRAINED_SEED } else { seed });
        let layers = TINY_CHANNELS.windows(2).map(|w| Conv3x3::init(w[0], w[1], &mut rng)).collect();
        Ok(TinyBackbone { spec, layers })
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }
}

impl Backbone for TinyBackbone {
    type Trace = TinyTrace;

    fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    fn input_channels(&self) -> usize {
        TINY_CHANNELS[0]
    }

    fn depth(&self) -> usize {
        self.layers.len()
    }

    fn forward(&self, input: &Tensor) -> (Vec<f64>, TinyTrace) {
        let conv1 = self.layers[0].forward(input);
        let pooled = avg_pool2(&conv1);
        let conv2 = self.layers[1].forward(&pooled);
        let plane = (conv2.height * conv2.width) as f64;
        let features = (0..conv2.channels).map(|c| conv2.plane(c).iter().sum::<f64>() / plane).collect();
        (features, TinyTrace { input: input.clone(), conv1, pooled, conv2 })
    }

    fn backward(&self, trace: &TinyTrace, feature_grad: &[f64], first_param_layer: usize, want_input: bool) -> Backward {
        let c2 = &trace.conv2;
        let plane = (c2.height * c2.width) as f64;
        let mut d_conv2 = Tensor::zeros(c2.channels, c2.height, c2.width);
        for c in 0..c2.channels {
            let g = feature_grad[c] / plane;
            let n = c2.height * c2.width;
            d_conv2.data[c * n..(c + 1) * n].iter_mut().for_each(|v| *v = g);
        }

        let need_below_2 = want_input || first_param_layer == 0;
        let (d_pooled, g2) =
            self.layers[1].backward(&trace.pooled, c2, &d_conv2, need_below_2, first_param_layer <= 1);
        let mut params = Vec::new();
        let mut input = None;
        if let Some(d_pooled) = d_pooled {
            let d_conv1 = avg_pool2_backward(&d_pooled, trace.conv1.height, trace.conv1.width);
            let (d_in, g1) =
                self.layers[0].backward(&trace.input, &trace.conv1, &d_conv1, want_input, first_param_layer == 0);
            input = d_in;
            params.extend(g1);
        }
        params.extend(g2);
        Backward { input, params }
    }

    fn layer_params(&self, layer: usize) -> &[f64] {
        &self.layers[layer].params
    }

    fn layer_params_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.layers[layer].params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe_input(size: usize) -> Tensor {
        let mut t = Tensor::zeros(3, size, size);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = libm::sin(i as f64 * 0.37);
        }
        t
    }

    #[test]
    fn only_tiny_test_is_available() {
        assert!(matches!(
            TinyBackbone::new(BackboneSpec::xception(), 0),
            Err(Error::BackboneUnavailable(_))
        ));
    }

    #[test]
    fn pretrained_weights_ignore_seed() {
        let a = TinyBackbone::new(BackboneSpec::tiny_test(8), 1).unwrap();
        let b = TinyBackbone::new(BackboneSpec::tiny_test(8), 2).unwrap();
        assert_eq!(a, b);
        let mut spec = BackboneSpec::tiny_test(8);
        spec.pretrained = false;
        assert_ne!(TinyBackbone::new(spec.clone(), 1).unwrap(), TinyBackbone::new(spec, 2).unwrap());
    }

    #[test]
    fn feature_length_matches_spec() {
        let b = TinyBackbone::new(BackboneSpec::tiny_test(8), 0).unwrap();
        assert_eq!(b.features(&probe_input(8)).len(), b.spec().feature_dim);
    }

    /// Parameter gradients of `sum(features * g)` against central differences.
    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut b = TinyBackbone::new(BackboneSpec::tiny_test(6), 0).unwrap();
        let x = probe_input(6);
        let g: Vec<f64> = (0..16).map(|i| 0.3 - 0.05 * i as f64).collect();
        let objective = |b: &TinyBackbone| b.features(&x).iter().zip(&g).map(|(f, g)| f * g).sum::<f64>();
        let (_, trace) = b.forward(&x);
        let grads = b.backward(&trace, &g, 0, false).params;
        for layer in 0..2 {
            for k in (0..b.layer_params(layer).len()).step_by(7) {
                let orig = b.layer_params(layer)[k];
                b.layer_params_mut(layer)[k] = orig + 1e-6;
                let up = objective(&b);
                b.layer_params_mut(layer)[k] = orig - 1e-6;
                let down = objective(&b);
                b.layer_params_mut(layer)[k] = orig;
                let fd = (up - down) / 2e-6;
                assert!((fd - grads[layer][k]).abs() < 1e-7, "layer {layer} param {k}: {fd} vs {}", grads[layer][k]);
            }
        }
    }
}
