//! Dual-view fusion models on disk. A fusion directory holds `fusion.json`
//! plus copies of both single-view artifacts, so it is self-contained.

use std::path::{Path, PathBuf};

use cartimark_core::backbone::TinyBackbone;
use cartimark_core::diagnostics::{confusion, diagnostic_metrics, MetricsRow};
use cartimark_core::fusion::{train_fusion as fit, CandidateC, DualViewModel};
use cartimark_core::image::GrayImage;
use cartimark_core::split::SplitAssignment;
use cartimark_core::svm::{FusionMode, SvmConfig, SvmModel};
use cartimark_core::{Label, Subset, View};
use serde::{Deserialize, Serialize};

use crate::dataset::{check_split, Dataset};
use crate::error::{AppError, Result};
use crate::fsutil::{read_json, sha256_hex, to_json_bytes, write_json};
use crate::models::{LoadedModel, PredictionRecord};

pub const FUSION_KIND: &str = "fusion";
pub const FUSION_FILE: &str = "fusion.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub kind: String,
    pub model_id: String,
    pub sagittal_model: String,
    pub coronal_model: String,
    pub svm: SvmModel,
    pub fusion_mode: FusionMode,
    pub threshold: f64,
    pub c_candidates: Vec<CandidateC>,
    pub validation_metrics: Option<MetricsRow>,
}

#[derive(Debug, Clone)]
pub struct LoadedFusion {
    pub file: FusionModel,
    pub sagittal: LoadedModel,
    pub coronal: LoadedModel,
    pub model: DualViewModel<TinyBackbone>,
}

fn check_view(m: &LoadedModel, expected: View) -> Result<()> {
    if m.artifact.view != expected {
        return Err(AppError::Core(cartimark_core::Error::ViewMismatch { expected, got: m.artifact.view }));
    }
    Ok(())
}

/// Builds fused inputs, trains on train, selects C on validation.
pub fn train_fusion(
    data: &Dataset,
    split: &SplitAssignment,
    sagittal: LoadedModel,
    coronal: LoadedModel,
    config: &SvmConfig,
    c_grid: &[f64],
) -> Result<LoadedFusion> {
    check_view(&sagittal, View::Sagittal)?;
    check_view(&coronal, View::Coronal)?;
    check_split(&data.manifest, split)?;
    let ids = |s| data.members(Some(split), Some(s));
    let sb = &sagittal.model.backbone;
    let cb = &coronal.model.backbone;
    let train = data.pairs(&ids(Subset::Train), sb, cb)?;
    let validation = data.pairs(&ids(Subset::Validation), sb, cb)?;
    let (model, candidates) =
        fit(sagittal.model.clone(), coronal.model.clone(), &train, &validation, config, c_grid)?;

    let svm_bytes = to_json_bytes(&model.svm);
    let model_id = format!("fusion-{}", &sha256_hex(&svm_bytes)[..12]);
    let validation_metrics = if validation.is_empty() {
        None
    } else {
        let calls: Result<Vec<Label>> = validation
            .iter()
            .map(|p| Ok(Label::from_defect(model.margin_tensors(&p.sagittal, &p.coronal)? >= model.threshold)))
            .collect();
        let truth: Vec<Label> = validation.iter().map(|p| p.label).collect();
        Some(diagnostic_metrics(&model_id, confusion(&calls?, &truth)?)?)
    };
    let file = FusionModel {
        kind: FUSION_KIND.into(),
        model_id,
        sagittal_model: "sagittal/model.json".into(),
        coronal_model: "coronal/model.json".into(),
        svm: model.svm.clone(),
        fusion_mode: model.mode,
        threshold: model.threshold,
        c_candidates: candidates,
        validation_metrics,
    };
    Ok(LoadedFusion { file, sagittal, coronal, model })
}

impl LoadedFusion {
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        self.sagittal.save(&dir.join("sagittal"))?;
        self.coronal.save(&dir.join("coronal"))?;
        let path = dir.join(FUSION_FILE);
        write_json(&path, &self.file)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: FusionModel = read_json(path)?;
        if file.kind != FUSION_KIND {
            return Err(AppError::parse(path, format!("expected kind `{FUSION_KIND}`, found `{}`", file.kind)));
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        let sagittal = LoadedModel::load(&dir.join(&file.sagittal_model))?;
        let coronal = LoadedModel::load(&dir.join(&file.coronal_model))?;
        check_view(&sagittal, View::Sagittal)?;
        check_view(&coronal, View::Coronal)?;
        let model = DualViewModel {
            sagittal: sagittal.model.clone(),
            coronal: coronal.model.clone(),
            svm: file.svm.clone(),
            mode: file.fusion_mode,
            threshold: file.threshold,
        };
        Ok(LoadedFusion { file, sagittal, coronal, model })
    }

    pub fn predict(&self, sagittal: &GrayImage, coronal: &GrayImage) -> Result<(f64, Label)> {
        Ok(self.model.predict(sagittal, coronal)?)
    }
}

/// Either kind of model, dispatched on the file's `kind` field.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Single(LoadedModel),
    Fusion(Box<LoadedFusion>),
}

impl AnyModel {
    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Kind {
            kind: String,
        }
        let k: Kind = read_json(path)?;
        match k.kind.as_str() {
            crate::models::SINGLE_VIEW_KIND => Ok(AnyModel::Single(LoadedModel::load(path)?)),
            FUSION_KIND => Ok(AnyModel::Fusion(Box::new(LoadedFusion::load(path)?))),
            other => Err(AppError::parse(path, format!("unknown model kind `{other}`"))),
        }
    }

    pub fn model_id(&self) -> &str {
        match self {
            AnyModel::Single(m) => &m.artifact.model_id,
            AnyModel::Fusion(f) => &f.file.model_id,
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            AnyModel::Single(m) => m.model.threshold,
            AnyModel::Fusion(f) => f.model.threshold,
        }
    }

    /// One record per id; `load` supplies each patient's image for a view.
    pub fn predict_with(
        &self,
        ids: &[String],
        load: &dyn Fn(&str, View) -> Result<GrayImage>,
    ) -> Result<Vec<PredictionRecord>> {
        ids.iter()
            .map(|id| {
                let (score, call) = match self {
                    AnyModel::Single(m) => {
                        let s = m.predict(&load(id, m.artifact.view)?)?;
                        (s, m.model.call(s))
                    }
                    AnyModel::Fusion(f) => f.predict(&load(id, View::Sagittal)?, &load(id, View::Coronal)?)?,
                };
                Ok(PredictionRecord {
                    patient_id: id.clone(),
                    rater_id: self.model_id().to_string(),
                    score: Some(score),
                    call,
                    threshold: Some(self.threshold()),
                })
            })
            .collect()
    }

    pub fn predict_dataset(&self, data: &Dataset, ids: &[String]) -> Result<Vec<PredictionRecord>> {
        self.predict_with(ids, &|id, view| data.load_image(id, view))
    }
}
