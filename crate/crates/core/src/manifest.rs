//! Dataset manifests: one record per patient, each holding exactly one
//! sagittal and one coronal slice plus the arthroscopy-verified label.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::types::{Label, View};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub uri: String,
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub bit_depth: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Laterality {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Clinical,
    Phantom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub patient_id: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laterality: Option<Laterality>,
    pub images: BTreeMap<View, ImageRef>,
}

impl StudyRecord {
    pub fn image(&self, view: View) -> Option<&ImageRef> {
        self.images.get(&view)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_name: String,
    #[serde(default)]
    pub created: String,
    pub source: Source,
    pub records: Vec<StudyRecord>,
}

impl Manifest {
    /// `(defect, no_defect)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let defect = self.records.iter().filter(|r| r.label.is_defect()).count();
        (defect, self.records.len() - defect)
    }

    pub fn record(&self, patient_id: &str) -> Option<&StudyRecord> {
        self.records.iter().find(|r| r.patient_id == patient_id)
    }

    pub fn patient_ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.patient_id.as_str())
    }
}

/// One broken invariant. Violations are data: validation never fails.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub record_index: Option<usize>,
    pub patient_id: Option<String>,
    pub rule: String,
    pub detail: String,
}

impl Violation {
    fn at(index: usize, record: &StudyRecord, rule: &str, detail: String) -> Self {
        Violation {
            record_index: Some(index),
            patient_id: Some(record.patient_id.clone()),
            rule: rule.to_string(),
            detail,
        }
    }
}

/// Structural validation. `readable` is consulted once per image reference;
/// pass `|_| true` to skip the filesystem check.
pub fn validate_manifest<F>(manifest: &Manifest, mut readable: F) -> Vec<Violation>
where
    F: FnMut(&ImageRef) -> bool,
{
    let mut out = Vec::new();
    if manifest.records.is_empty() {
        out.push(Violation {
            record_index: None,
            patient_id: None,
            rule: "empty_manifest".to_string(),
            detail: "manifest has no records".to_string(),
        });
    }
    let mut seen = BTreeSet::new();
    for (index, record) in manifest.records.iter().enumerate() {
        if record.patient_id.is_empty() {
            out.push(Violation::at(index, record, "empty_patient_id", String::new()));
        }
        if !seen.insert(record.patient_id.as_str()) {
            out.push(Violation::at(
                index,
                record,
                "duplicate_patient_id",
                alloc::format!("patient_id `{}` appears more than once", record.patient_id),
            ));
        }
        for view in View::BOTH {
            match record.images.get(&view) {
                None => out.push(Violation::at(
                    index,
                    record,
                    "missing_view",
                    alloc::format!("missing {view} view"),
                )),
                Some(img) => {
                    if img.width == 0 || img.height == 0 {
                        out.push(Violation::at(
                            index,
                            record,
                            "invalid_dimensions",
                            alloc::format!("{view}: {}x{}", img.width, img.height),
                        ));
                    }
                    if img.channels != 1 && img.channels != 3 {
                        out.push(Violation::at(
                            index,
                            record,
                            "invalid_channels",
                            alloc::format!("{view}: {} channels", img.channels),
                        ));
                    }
                    if !readable(img) {
                        out.push(Violation::at(index, record, "unreadable_image", img.uri.clone()));
                    }
                }
            }
        }
    }
    out
}
