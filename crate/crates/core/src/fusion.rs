//! Dual-view late fusion: per-view representations combined by a linear SVM.
//!
//! In feature mode the SVM sees the concatenated penultimate features of the
//! sagittal and coronal classifiers; in score mode it sees the 2-vector of
//! their logistic scores. The fused score is the raw signed margin.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::classifier::{sigmoid, SingleViewModel};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::svm::{train_svm, FusionMode, SvmConfig, SvmModel};
use crate::tensor::Tensor;
use crate::types::{Label, View};

pub const DEFAULT_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// One patient's preprocessed pair.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub patient_id: alloc::string::String,
    pub sagittal: Tensor,
    pub coronal: Tensor,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateC {
    #[serde(rename = "C")]
    pub c: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualViewModel<B> {
    pub sagittal: SingleViewModel<B>,
    pub coronal: SingleViewModel<B>,
    pub svm: SvmModel,
    pub mode: FusionMode,
    pub threshold: f64,
}

fn view_representation<B: Backbone>(model: &SingleViewModel<B>, input: &Tensor, mode: FusionMode) -> Vec<f64> {
    let features = model.backbone.features(input);
    match mode {
        FusionMode::Feature => features,
        FusionMode::Score => alloc::vec![sigmoid(model.head.logit(&features))],
    }
}

/// Fused SVM input for one patient.
pub fn fused_input<B: Backbone>(
    sagittal: &SingleViewModel<B>,
    coronal: &SingleViewModel<B>,
    mode: FusionMode,
    sagittal_input: &Tensor,
    coronal_input: &Tensor,
) -> Vec<f64> {
    let mut v = view_representation(sagittal, sagittal_input, mode);
    v.extend(view_representation(coronal, coronal_input, mode));
    v
}

pub fn fused_dim<B: Backbone>(sagittal: &SingleViewModel<B>, coronal: &SingleViewModel<B>, mode: FusionMode) -> usize {
    match mode {
        FusionMode::Feature => sagittal.backbone.spec().feature_dim + coronal.backbone.spec().feature_dim,
        FusionMode::Score => 2,
    }
}

fn check_views<B>(sagittal: &SingleViewModel<B>, coronal: &SingleViewModel<B>) -> Result<()> {
    if sagittal.view != View::Sagittal {
        return Err(Error::ViewMismatch { expected: View::Sagittal, got: sagittal.view });
    }
    if coronal.view != View::Coronal {
        return Err(Error::ViewMismatch { expected: View::Coronal, got: coronal.view });
    }
    Ok(())
}

/// Trains the fusion SVM on `train`, picking C from `c_grid` by validation
/// accuracy (earliest grid entry wins ties). With no validation samples the
/// configured C is used.
pub fn train_fusion<B: Backbone>(
    sagittal: SingleViewModel<B>,
    coronal: SingleViewModel<B>,
    train: &[PairSample],
    validation: &[PairSample],
    config: &SvmConfig,
    c_grid: &[f64],
) -> Result<(DualViewModel<B>, Vec<CandidateC>)> {
    config.validate()?;
    check_views(&sagittal, &coronal)?;
    let has = |l: Label| train.iter().any(|s| s.label == l);
    if !(has(Label::Defect) && has(Label::NoDefect)) {
        return Err(Error::SingleClassTrainingSet);
    }
    let mode = config.fusion_mode;
    let encode = |s: &PairSample| fused_input(&sagittal, &coronal, mode, &s.sagittal, &s.coronal);
    let x: Vec<Vec<f64>> = train.iter().map(encode).collect();
    let y: Vec<f64> = train.iter().map(|s| s.label.signed()).collect();
    let xv: Vec<Vec<f64>> = validation.iter().map(encode).collect();

    let grid: Vec<f64> = if validation.is_empty() || c_grid.is_empty() {
        alloc::vec![config.c]
    } else {
        c_grid.to_vec()
    };
    let mut best: Option<(SvmModel, f64)> = None;
    let mut candidates = Vec::with_capacity(grid.len());
    for c in grid {
        let cfg = SvmConfig { c, ..config.clone() };
        let model = train_svm(&x, &y, &cfg)?;
        let acc = if validation.is_empty() {
            None
        } else {
            let correct = xv
                .iter()
                .zip(validation)
                .filter(|(xi, s)| Label::from_defect(model.decision(xi).unwrap_or(f64::NAN) >= 0.0) == s.label)
                .count();
            Some(correct as f64 / validation.len() as f64)
        };
        candidates.push(CandidateC { c, validation_accuracy: acc });
        let score = acc.unwrap_or(0.0);
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((model, score));
        }
    }
    let (svm, _) = best.expect("grid is non-empty");
    Ok((DualViewModel { sagittal, coronal, svm, mode, threshold: 0.0 }, candidates))
}

impl<B: Backbone> DualViewModel<B> {
    pub fn margin_tensors(&self, sagittal: &Tensor, coronal: &Tensor) -> Result<f64> {
        self.svm.decision(&fused_input(&self.sagittal, &self.coronal, self.mode, sagittal, coronal))
    }

    pub fn predict(&self, sagittal: &GrayImage, coronal: &GrayImage) -> Result<(f64, Label)> {
        let s = self.sagittal.preprocess(sagittal)?;
        let c = self.coronal.preprocess(coronal)?;
        let margin = self.margin_tensors(&s, &c)?;
        Ok((margin, Label::from_defect(margin >= self.threshold)))
    }

    /// d margin / d preprocessed input, for the sagittal and coronal inputs.
    pub fn margin_gradients(&self, sagittal: &Tensor, coronal: &Tensor) -> [Tensor; 2] {
        let g = self.svm.input_gradient();
        match self.mode {
            FusionMode::Feature => {
                let split = self.sagittal.backbone.spec().feature_dim;
                [self.sagittal.pull_back(sagittal, &g[..split]), self.coronal.pull_back(coronal, &g[split..])]
            }
            FusionMode::Score => {
                let scale = |t: Tensor, k: f64| Tensor { data: t.data.iter().map(|v| v * k).collect(), ..t };
                [
                    scale(self.sagittal.score_gradient(sagittal), g[0]),
                    scale(self.coronal.score_gradient(coronal), g[1]),
                ]
            }
        }
    }
}
