//! Manifest and split files, image loading and the phantom writer.

use std::fs;
use std::path::{Path, PathBuf};

use cartimark_core::backbone::{preprocess, Backbone};
use cartimark_core::fusion::PairSample;
use cartimark_core::image::GrayImage;
use cartimark_core::manifest::{validate_manifest, ImageRef, Manifest, Source, StudyRecord, Violation};
use cartimark_core::phantom::{plan_cases, render_view, PhantomConfig};
use cartimark_core::split::SplitAssignment;
use cartimark_core::train::TrainSample;
use cartimark_core::{Label, Subset, View};
use serde::Deserialize;

use crate::error::{AppError, Result};
use crate::fsutil::{read_json, write_json};
use crate::imageio;

/// Timestamp written into generated manifests so reruns are byte-identical.
pub const FIXED_CREATED: &str = "1970-01-01T00:00:00Z";

/// A manifest together with the directory its relative URIs resolve against.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub base_dir: PathBuf,
}

#[derive(Deserialize)]
struct RawManifest {
    dataset_name: String,
    #[serde(default)]
    created: String,
    source: Source,
    records: Vec<serde_json::Value>,
}

fn record_error(index: usize, patient_id: Option<&str>, rule: &str, message: String) -> AppError {
    AppError::Record { index, patient_id: patient_id.map(String::from), rule: rule.into(), message }
}

/// Parses and structurally validates a manifest file. Record-level failures
/// carry the record index; image readability is left to [`validate_files`].
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(AppError::io(path))?;
    let raw: RawManifest = serde_json::from_str(&text).map_err(|e| AppError::parse(path, e))?;
    let mut records = Vec::with_capacity(raw.records.len());
    for (index, value) in raw.records.into_iter().enumerate() {
        let pid = value.get("patient_id").and_then(|v| v.as_str()).map(String::from);
        if let Some(images) = value.get("images").and_then(|v| v.as_object()) {
            for view in View::BOTH {
                if !images.contains_key(view.as_str()) {
                    return Err(record_error(index, pid.as_deref(), "missing_view", format!("missing {view} view")));
                }
            }
        }
        let record: StudyRecord = serde_json::from_value(value)
            .map_err(|e| record_error(index, pid.as_deref(), "malformed_record", e.to_string()))?;
        records.push(record);
    }
    let manifest = Manifest { dataset_name: raw.dataset_name, created: raw.created, source: raw.source, records };
    if let Some(v) = validate_manifest(&manifest, |_| true).into_iter().next() {
        return Err(match v.record_index {
            Some(index) => record_error(index, v.patient_id.as_deref(), &v.rule, v.detail),
            None => AppError::Core(cartimark_core::Error::EmptyManifest),
        });
    }
    Ok(manifest)
}

pub fn save_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    write_json(path, manifest)
}

pub fn resolve_uri(base_dir: &Path, uri: &str) -> PathBuf {
    let p = Path::new(uri);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Structural rules plus an `unreadable_image` check against the files.
pub fn validate_files(manifest: &Manifest, base_dir: &Path) -> Vec<Violation> {
    validate_manifest(manifest, |img: &ImageRef| imageio::probe(&resolve_uri(base_dir, &img.uri)).is_some())
}

pub fn load_split(path: &Path) -> Result<SplitAssignment> {
    read_json(path)
}

pub fn save_split(path: &Path, split: &SplitAssignment) -> Result<()> {
    write_json(path, split)
}

/// The split's keys must be exactly the manifest's patients.
pub fn check_split(manifest: &Manifest, split: &SplitAssignment) -> Result<()> {
    if let Some(id) = manifest.patient_ids().find(|id| split.subset_of(id).is_none()) {
        return Err(AppError::SplitMismatch(format!("patient `{id}` has no subset")));
    }
    if let Some(id) = split.assignment.keys().find(|id| manifest.record(id).is_none()) {
        return Err(AppError::SplitMismatch(format!("patient `{id}` is not in the manifest")));
    }
    Ok(())
}

impl Dataset {
    pub fn open(path: &Path) -> Result<Self> {
        let manifest = load_manifest(path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Dataset { manifest, base_dir })
    }

    pub fn record(&self, patient_id: &str) -> Result<&StudyRecord> {
        self.manifest.record(patient_id).ok_or_else(|| AppError::UnknownPatient(patient_id.into()))
    }

    pub fn image_path(&self, record: &StudyRecord, view: View) -> Result<PathBuf> {
        let img = record.image(view).ok_or_else(|| AppError::Record {
            index: 0,
            patient_id: Some(record.patient_id.clone()),
            rule: "missing_view".into(),
            message: format!("missing {view} view"),
        })?;
        Ok(resolve_uri(&self.base_dir, &img.uri))
    }

    pub fn load_image(&self, patient_id: &str, view: View) -> Result<GrayImage> {
        imageio::read_gray(&self.image_path(self.record(patient_id)?, view)?)
    }

    /// Patients of `subset` in canonical (sorted) order; `None` means all.
    pub fn members(&self, split: Option<&SplitAssignment>, subset: Option<Subset>) -> Vec<String> {
        let mut ids: Vec<String> = match (split, subset) {
            (Some(s), Some(sub)) => s.members(sub).map(String::from).collect(),
            _ => self.manifest.patient_ids().map(String::from).collect(),
        };
        ids.sort();
        ids
    }

    pub fn label(&self, patient_id: &str) -> Result<Label> {
        Ok(self.record(patient_id)?.label)
    }

    pub fn samples<B: Backbone>(&self, ids: &[String], view: View, backbone: &B) -> Result<Vec<TrainSample>> {
        ids.iter()
            .map(|id| {
                Ok(TrainSample {
                    patient_id: id.clone(),
                    input: preprocess(backbone, &self.load_image(id, view)?)?,
                    label: self.label(id)?,
                })
            })
            .collect()
    }

    pub fn pairs<B: Backbone>(&self, ids: &[String], sagittal: &B, coronal: &B) -> Result<Vec<PairSample>> {
        ids.iter()
            .map(|id| {
                Ok(PairSample {
                    patient_id: id.clone(),
                    sagittal: preprocess(sagittal, &self.load_image(id, View::Sagittal)?)?,
                    coronal: preprocess(coronal, &self.load_image(id, View::Coronal)?)?,
                    label: self.label(id)?,
                })
            })
            .collect()
    }
}

/// Renders `config` into `out_dir/images/*.png` and writes
/// `out_dir/manifest.json`.
pub fn generate_phantoms(config: &PhantomConfig, out_dir: &Path) -> Result<Manifest> {
    let cases = plan_cases(config)?;
    let mut records = Vec::with_capacity(cases.len());
    for case in &cases {
        let id = case.patient_id();
        let mut images = std::collections::BTreeMap::new();
        for view in View::BOTH {
            let img = render_view(config, case, view);
            let uri = format!("images/{id}_{view}.png");
            imageio::write_gray8(&out_dir.join(&uri), &img)?;
            images.insert(
                view,
                ImageRef { uri, width: img.width as u32, height: img.height as u32, channels: 1, bit_depth: 8 },
            );
        }
        records.push(StudyRecord { patient_id: id, label: case.label, laterality: Some(case.laterality), images });
    }
    let manifest = Manifest {
        dataset_name: format!("phantom-n{}-seed{}", config.n_patients, config.seed),
        created: FIXED_CREATED.into(),
        source: Source::Phantom,
        records,
    };
    save_manifest(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
