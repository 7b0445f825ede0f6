//! Vanilla input-gradient saliency: `max_c |d score / d input[c, y, x]|`,
//! min-max normalised per map.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::classifier::SingleViewModel;
use crate::fusion::DualViewModel;
use crate::tensor::Tensor;
use crate::types::View;

pub const VANILLA_GRADIENT: &str = "vanilla_gradient";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub method: String,
    pub model_id: String,
    pub patient_id: String,
    pub view: View,
    pub height: usize,
    pub width: usize,
    /// Row-major, each value in `[0, 1]`.
    pub values: Vec<f64>,
}

impl SaliencyMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Channel-max of absolute values, row-major `H x W`.
pub fn channel_max_abs(grad: &Tensor) -> Vec<f64> {
    let n = grad.height * grad.width;
    (0..n)
        .map(|p| (0..grad.channels).map(|c| libm::fabs(grad.data[c * n + p])).fold(0.0, f64::max))
        .collect()
}

/// Min-max normalisation. An identically zero grid stays zero; any other
/// constant grid maps to ones.
pub fn normalize(mut values: Vec<f64>) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        let fill = if hi > 0.0 { 1.0 } else { 0.0 };
        values.iter_mut().for_each(|v| *v = fill);
        return values;
    }
    values.iter_mut().for_each(|v| *v = (*v - lo) / range);
    values
}

pub fn map_from_gradient(grad: &Tensor) -> Vec<f64> {
    normalize(channel_max_abs(grad))
}

fn build(grad: &Tensor, view: View, model_id: &str, patient_id: &str) -> SaliencyMap {
    SaliencyMap {
        method: String::from(VANILLA_GRADIENT),
        model_id: String::from(model_id),
        patient_id: String::from(patient_id),
        view,
        height: grad.height,
        width: grad.width,
        values: map_from_gradient(grad),
    }
}

pub fn single_view_saliency<B: Backbone>(
    model: &SingleViewModel<B>,
    input: &Tensor,
    model_id: &str,
    patient_id: &str,
) -> SaliencyMap {
    build(&model.score_gradient(input), model.view, model_id, patient_id)
}

/// One map per view, differentiating the fused SVM margin.
pub fn fusion_saliency<B: Backbone>(
    model: &DualViewModel<B>,
    sagittal: &Tensor,
    coronal: &Tensor,
    model_id: &str,
    patient_id: &str,
) -> [SaliencyMap; 2] {
    let [gs, gc] = model.margin_gradients(sagittal, coronal);
    [build(&gs, View::Sagittal, model_id, patient_id), build(&gc, View::Coronal, model_id, patient_id)]
}
