//! Single-view classifier: backbone -> global-pooled features -> standardise
//! -> one dense unit -> logistic score in `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backbone::{preprocess, Backbone, TinyBackbone};
use crate::error::Result;
use crate::image::GrayImage;
use crate::tensor::Tensor;
use crate::types::{Label, View};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Dense logistic head over standardised features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Head {
    /// Untrained head: identity standardisation, zero weights (score 0.5).
    pub fn untrained(dim: usize) -> Self {
        Head { mean: vec![0.0; dim], scale: vec![1.0; dim], weights: vec![0.0; dim], bias: 0.0 }
    }

    pub fn standardize(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(f, (m, s))| (f - m) / s)
            .collect()
    }

    pub fn logit(&self, features: &[f64]) -> f64 {
        self.bias
            + features
                .iter()
                .zip(self.mean.iter().zip(&self.scale))
                .zip(&self.weights)
                .map(|((f, (m, s)), w)| w * (f - m) / s)
                .sum::<f64>()
    }

    /// d logit / d features.
    pub fn feature_gradient(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.scale).map(|(w, s)| w / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleViewModel<B = TinyBackbone> {
    pub view: View,
    pub backbone: B,
    pub head: Head,
    pub threshold: f64,
}

impl<B: Backbone> SingleViewModel<B> {
    pub fn preprocess(&self, image: &GrayImage) -> Result<Tensor> {
        preprocess(&self.backbone, image)
    }

    pub fn score_tensor(&self, input: &Tensor) -> f64 {
        sigmoid(self.head.logit(&self.backbone.features(input)))
    }

    pub fn score(&self, image: &GrayImage) -> Result<f64> {
        Ok(self.score_tensor(&self.preprocess(image)?))
    }

    pub fn features(&self, image: &GrayImage) -> Result<Vec<f64>> {
        Ok(self.backbone.features(&self.preprocess(image)?))
    }

    pub fn call(&self, score: f64) -> Label {
        Label::from_defect(score >= self.threshold)
    }

    /// Back-propagates an arbitrary feature-space gradient to the input.
    pub fn pull_back(&self, input: &Tensor, feature_grad: &[f64]) -> Tensor {
        let (_, trace) = self.backbone.forward(input);
        let depth = self.backbone.depth();
        self.backbone
            .backward(&trace, feature_grad, depth, true)
            .input
            .expect("input gradient requested")
    }

    /// d score / d preprocessed input.
    pub fn score_gradient(&self, input: &Tensor) -> Tensor {
        let (features, trace) = self.backbone.forward(input);
        let s = sigmoid(self.head.logit(&features));
        let g: Vec<f64> = self.head.feature_gradient().iter().map(|v| v * s * (1.0 - s)).collect();
        let depth = self.backbone.depth();
        self.backbone.backward(&trace, &g, depth, true).input.expect("input gradient requested")
    }
}
