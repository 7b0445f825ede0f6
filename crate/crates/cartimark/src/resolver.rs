//! Resolves `name:subset` dataset references for the service.
//!
//! Registered datasets pair a manifest with a split file. The builtin
//! `table2` dataset serves the bundled 29-case reading table; its images are
//! phantoms rendered on demand with the table's ground-truth labels.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use cartimark_core::image::GrayImage;
use cartimark_core::phantom::{plan_cases_with_labels, render_view, PhantomCase, PhantomConfig};
use cartimark_core::split::SplitAssignment;
use cartimark_core::table2::Table2Dataset;
use cartimark_core::{Label, Subset, View};

use crate::dataset::{load_split, Dataset};
use crate::error::{AppError, Result};

pub const TABLE2_NAME: &str = "table2";

/// Phantom settings for the builtin table dataset's images.
pub fn table2_phantom_config() -> PhantomConfig {
    PhantomConfig { n_patients: 29, seed: 2929, image_size: 64, noise_sigma: 0.02, ..PhantomConfig::default() }
}

enum Images {
    Files(Arc<Dataset>),
    Rendered { config: PhantomConfig, cases: BTreeMap<String, PhantomCase> },
}

/// A resolved subset: patient ids, server-side labels and image access.
pub struct CaseSet {
    pub dataset_ref: String,
    pub subset: Subset,
    pub patient_ids: Vec<String>,
    labels: BTreeMap<String, Label>,
    images: Images,
}

impl CaseSet {
    /// Ground truth; only the report path may call this.
    pub fn label(&self, patient_id: &str) -> Result<Label> {
        self.labels.get(patient_id).copied().ok_or_else(|| AppError::UnknownPatient(patient_id.into()))
    }

    pub fn labels(&self) -> &BTreeMap<String, Label> {
        &self.labels
    }

    pub fn image(&self, patient_id: &str, view: View) -> Result<GrayImage> {
        match &self.images {
            Images::Files(d) => d.load_image(patient_id, view),
            Images::Rendered { config, cases } => {
                let case = cases.get(patient_id).ok_or_else(|| AppError::UnknownPatient(patient_id.into()))?;
                Ok(render_view(config, case, view))
            }
        }
    }

    pub fn is_table2(&self) -> bool {
        matches!(self.images, Images::Rendered { .. })
    }

    /// A manifest-backed view of this set, for batch prediction.
    pub fn dataset(&self) -> Option<&Dataset> {
        match &self.images {
            Images::Files(d) => Some(d),
            Images::Rendered { .. } => None,
        }
    }
}

#[derive(Default)]
pub struct Resolver {
    datasets: BTreeMap<String, (Arc<Dataset>, SplitAssignment)>,
}

pub fn parse_ref(dataset_ref: &str) -> Result<(&str, Subset)> {
    let (name, subset) = dataset_ref.split_once(':').ok_or_else(|| AppError::UnknownDataset(dataset_ref.into()))?;
    let subset = subset.parse::<Subset>().map_err(|_| AppError::UnknownDataset(dataset_ref.into()))?;
    Ok((name, subset))
}

impl Resolver {
    pub fn register(&mut self, name: &str, manifest: &Path, split: &Path) -> Result<()> {
        if name == TABLE2_NAME || name.contains(':') {
            return Err(AppError::Usage(format!("dataset name `{name}` is reserved or invalid")));
        }
        let data = Dataset::open(manifest)?;
        let split = load_split(split)?;
        crate::dataset::check_split(&data.manifest, &split)?;
        self.datasets.insert(name.into(), (Arc::new(data), split));
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.datasets.keys().map(String::as_str)
    }

    /// Any subset; used for batch prediction.
    pub fn resolve(&self, dataset_ref: &str) -> Result<CaseSet> {
        let (name, subset) = parse_ref(dataset_ref)?;
        if name == TABLE2_NAME {
            if subset != Subset::Test {
                return Err(AppError::UnknownDataset(dataset_ref.into()));
            }
            let table = Table2Dataset::bundled()?;
            let labels: Vec<Label> = table.rows.iter().map(|r| r.ground_truth).collect();
            let config = table2_phantom_config();
            let cases = plan_cases_with_labels(&config, &labels)?;
            let ids: Vec<String> = table.rows.iter().map(|r| Table2Dataset::patient_id(r.patient_index)).collect();
            return Ok(CaseSet {
                dataset_ref: dataset_ref.into(),
                subset,
                patient_ids: ids.clone(),
                labels: ids.iter().cloned().zip(labels).collect(),
                images: Images::Rendered { config, cases: ids.into_iter().zip(cases).collect() },
            });
        }
        let (data, split) = self.datasets.get(name).ok_or_else(|| AppError::UnknownDataset(dataset_ref.into()))?;
        let ids = data.members(Some(split), Some(subset));
        let labels = ids.iter().map(|id| Ok((id.clone(), data.label(id)?))).collect::<Result<_>>()?;
        Ok(CaseSet { dataset_ref: dataset_ref.into(), subset, patient_ids: ids, labels, images: Images::Files(data.clone()) })
    }

    /// Test subsets only; the blinding guard for reader sessions.
    pub fn resolve_test(&self, dataset_ref: &str) -> Result<CaseSet> {
        let (name, subset) = parse_ref(dataset_ref)?;
        if name != TABLE2_NAME && !self.datasets.contains_key(name) {
            return Err(AppError::UnknownDataset(dataset_ref.into()));
        }
        if subset != Subset::Test {
            return Err(AppError::NotATestSubset(dataset_ref.into()));
        }
        self.resolve(dataset_ref)
    }
}
