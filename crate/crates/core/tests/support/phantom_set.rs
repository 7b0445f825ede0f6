//! In-memory phantom cohorts for pipeline tests.

use std::collections::BTreeMap;

use cartimark_core::backbone::{preprocess, BackboneSpec, TinyBackbone};
use cartimark_core::fusion::PairSample;
use cartimark_core::manifest::{ImageRef, Manifest, Source, StudyRecord};
use cartimark_core::phantom::{plan_cases, render_view, PhantomConfig};
use cartimark_core::split::{split_dataset, SplitAssignment, SplitRatios};
use cartimark_core::train::TrainSample;
use cartimark_core::{Subset, View};

pub struct Cohort {
    pub manifest: Manifest,
    pub split: SplitAssignment,
    pub pairs: BTreeMap<String, PairSample>,
}

pub fn tiny(size: usize) -> TinyBackbone {
    TinyBackbone::new(BackboneSpec::tiny_test(size), 0).unwrap()
}

pub fn cohort(config: &PhantomConfig, split_seed: u64) -> Cohort {
    let backbone = tiny(config.image_size);
    let cases = plan_cases(config).unwrap();
    let mut records = Vec::new();
    let mut pairs = BTreeMap::new();
    for case in &cases {
        let id = case.patient_id();
        let mut images = BTreeMap::new();
        let mut tensors = Vec::new();
        for view in View::BOTH {
            let img = render_view(config, case, view);
            images.insert(
                view,
                ImageRef { uri: format!("{id}_{view}.png"), width: img.width as u32, height: img.height as u32, channels: 1, bit_depth: 8 },
            );
            tensors.push((view, preprocess(&backbone, &img).unwrap()));
        }
        let take = |v: View| tensors.iter().find(|(w, _)| *w == v).unwrap().1.clone();
        pairs.insert(
            id.clone(),
            PairSample { patient_id: id.clone(), sagittal: take(View::Sagittal), coronal: take(View::Coronal), label: case.label },
        );
        records.push(StudyRecord { patient_id: id, label: case.label, laterality: Some(case.laterality), images });
    }
    let manifest = Manifest { dataset_name: "phantom".into(), created: String::new(), source: Source::Phantom, records };
    let split = split_dataset(&manifest, SplitRatios::STANDARD, split_seed, true).unwrap();
    Cohort { manifest, split, pairs }
}

impl Cohort {
    pub fn pairs(&self, subset: Subset) -> Vec<PairSample> {
        self.split.members(subset).map(|id| self.pairs[id].clone()).collect()
    }

    pub fn samples(&self, subset: Subset, view: View) -> Vec<TrainSample> {
        self.pairs(subset)
            .into_iter()
            .map(|p| TrainSample {
                patient_id: p.patient_id,
                input: if view == View::Sagittal { p.sagittal } else { p.coronal },
                label: p.label,
            })
            .collect()
    }
}
