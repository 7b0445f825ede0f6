//! Single-view model artifacts: training from files, a JSON sidecar plus a
//! weights file, prediction records and grid search.

use std::fs;
use std::path::{Path, PathBuf};

use cartimark_core::backbone::{Backbone, BackboneSpec, TinyBackbone};
use cartimark_core::classifier::SingleViewModel;
use cartimark_core::diagnostics::{confusion, diagnostic_metrics, MetricsRow};
use cartimark_core::grid::{grid_search as run_grid, HyperGrid, LeaderboardEntry};
use cartimark_core::split::SplitAssignment;
use cartimark_core::train::{train_classifier, EpochLog, TrainConfig, TrainOutcome, TrainSample};
use cartimark_core::{Label, Subset, View};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{AppError, Result};
use crate::fsutil::{read_json, sha256_hex, to_json_bytes, write_atomic, write_json};

pub const SINGLE_VIEW_KIND: &str = "single_view";
pub const SIDECAR_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub resize: String,
    pub input_size: usize,
    pub channels: usize,
    pub intensity: String,
}

impl Preprocessing {
    pub fn for_backbone<B: Backbone>(b: &B) -> Self {
        Preprocessing {
            resize: "letterbox".into(),
            input_size: b.spec().input_size,
            channels: b.input_channels(),
            intensity: "2x-1".into(),
        }
    }
}

/// Sidecar metadata for a trained single-view classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub kind: String,
    pub model_id: String,
    pub view: View,
    pub backbone: BackboneSpec,
    pub config: TrainConfig,
    pub threshold: f64,
    pub weights_uri: String,
    pub weights_sha256: String,
    pub validation_metrics: Option<MetricsRow>,
    pub training_log: Vec<EpochLog>,
    pub preprocessing: Preprocessing,
}

/// A loaded artifact: metadata plus the live model.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub artifact: ModelArtifact,
    pub model: SingleViewModel<TinyBackbone>,
}

/// One rater's call on one case. Human raters carry no score or threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub patient_id: String,
    pub rater_id: String,
    pub score: Option<f64>,
    pub call: Label,
    pub threshold: Option<f64>,
}

pub fn make_backbone(spec: &BackboneSpec, seed: u64) -> Result<TinyBackbone> {
    Ok(TinyBackbone::new(spec.clone(), seed)?)
}

/// Row of standard metrics for `model` on `samples`; `None` when empty.
pub fn metrics_on(rater_id: &str, model: &SingleViewModel<TinyBackbone>, samples: &[TrainSample]) -> Option<MetricsRow> {
    if samples.is_empty() {
        return None;
    }
    let calls: Vec<Label> = samples.iter().map(|s| model.call(model.score_tensor(&s.input))).collect();
    let truth: Vec<Label> = samples.iter().map(|s| s.label).collect();
    diagnostic_metrics(rater_id, confusion(&calls, &truth).ok()?).ok()
}

fn weights_bytes(model: &SingleViewModel<TinyBackbone>) -> Vec<u8> {
    to_json_bytes(model)
}

/// Content-derived id so identical training runs produce identical files.
fn model_id(view: View, weights: &[u8]) -> String {
    format!("cnn-{view}-{}", &sha256_hex(weights)[..12])
}

fn build_artifact(outcome: TrainOutcome<TinyBackbone>, config: TrainConfig, validation: &[TrainSample]) -> LoadedModel {
    let model = outcome.model;
    let weights = weights_bytes(&model);
    let id = model_id(model.view, &weights);
    let artifact = ModelArtifact {
        kind: SINGLE_VIEW_KIND.into(),
        model_id: id.clone(),
        view: model.view,
        backbone: model.backbone.spec().clone(),
        threshold: model.threshold,
        config,
        weights_uri: WEIGHTS_FILE.into(),
        weights_sha256: sha256_hex(&weights),
        validation_metrics: metrics_on(&id, &model, validation),
        training_log: outcome.log,
        preprocessing: Preprocessing::for_backbone(&model.backbone),
    };
    LoadedModel { artifact, model }
}

pub struct ViewData {
    pub train: Vec<TrainSample>,
    pub validation: Vec<TrainSample>,
}

pub fn view_data(data: &Dataset, split: &SplitAssignment, view: View, backbone: &TinyBackbone) -> Result<ViewData> {
    crate::dataset::check_split(&data.manifest, split)?;
    let ids = |s| data.members(Some(split), Some(s));
    Ok(ViewData {
        train: data.samples(&ids(Subset::Train), view, backbone)?,
        validation: data.samples(&ids(Subset::Validation), view, backbone)?,
    })
}

/// Trains on the split's train subset and scores the validation subset.
/// `observer` sees every patient id that feeds a gradient step.
pub fn train_single_view(
    data: &Dataset,
    split: &SplitAssignment,
    view: View,
    config: &TrainConfig,
    spec: &BackboneSpec,
    observer: &mut dyn FnMut(&str),
) -> Result<LoadedModel> {
    let backbone = make_backbone(spec, config.seed)?;
    let vd = view_data(data, split, view, &backbone)?;
    let outcome = train_classifier(backbone, view, &vd.train, &vd.validation, config, observer)?;
    Ok(build_artifact(outcome, config.clone(), &vd.validation))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub view: View,
    pub best_index: usize,
    pub entries: Vec<LeaderboardEntry>,
}

pub fn grid_search(
    data: &Dataset,
    split: &SplitAssignment,
    view: View,
    grid: &HyperGrid,
    base: &TrainConfig,
    spec: &BackboneSpec,
) -> Result<(TrainConfig, LoadedModel, Leaderboard)> {
    let probe = make_backbone(spec, base.seed)?;
    let vd = view_data(data, split, view, &probe)?;
    let mut make = || TinyBackbone::new(spec.clone(), base.seed);
    let out = run_grid(&mut make, view, &vd.train, &vd.validation, grid, base, &mut |_| {})?;
    let config = out.leaderboard[out.best].config.clone();
    let loaded = build_artifact(out.outcome, config.clone(), &vd.validation);
    let board = Leaderboard { view, best_index: out.best, entries: out.leaderboard };
    Ok((config, loaded, board))
}

impl LoadedModel {
    /// Writes `dir/model.json` and `dir/weights.json`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        write_atomic(&dir.join(&self.artifact.weights_uri), &weights_bytes(&self.model))?;
        let sidecar = dir.join(SIDECAR_FILE);
        write_json(&sidecar, &self.artifact)?;
        Ok(sidecar)
    }

    pub fn load(sidecar: &Path) -> Result<Self> {
        let artifact: ModelArtifact = read_json(sidecar)?;
        if artifact.kind != SINGLE_VIEW_KIND {
            return Err(AppError::parse(sidecar, format!("expected kind `{SINGLE_VIEW_KIND}`, found `{}`", artifact.kind)));
        }
        let dir = sidecar.parent().unwrap_or(Path::new("."));
        let weights_path = dir.join(&artifact.weights_uri);
        let bytes = fs::read(&weights_path).map_err(AppError::io(&weights_path))?;
        if sha256_hex(&bytes) != artifact.weights_sha256 {
            return Err(AppError::parse(&weights_path, "weights checksum does not match sidecar"));
        }
        let model: SingleViewModel<TinyBackbone> =
            serde_json::from_slice(&bytes).map_err(|e| AppError::parse(&weights_path, e))?;
        if model.view != artifact.view {
            return Err(AppError::Core(cartimark_core::Error::ViewMismatch { expected: artifact.view, got: model.view }));
        }
        Ok(LoadedModel { artifact, model })
    }

    pub fn predict(&self, image: &cartimark_core::image::GrayImage) -> Result<f64> {
        Ok(self.model.score(image)?)
    }

    pub fn extract_features(&self, image: &cartimark_core::image::GrayImage) -> Result<Vec<f64>> {
        Ok(self.model.features(image)?)
    }
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut bytes = Vec::new();
    for r in records {
        bytes.extend(serde_json::to_vec(r).expect("serialisable record"));
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = fs::read_to_string(path).map_err(AppError::io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| AppError::parse(path, format!("line {}: {e}", i + 1))))
        .collect()
}
