//! Patient-level train/validation/test partitioning.
//!
//! Records are sorted by `patient_id` before shuffling, so the result depends
//! only on the set of patients, their labels and the seed. Subset sizes are
//! `floor(N * r_test)`, `floor(N * r_val)` and the remainder for training.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::types::Subset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const STANDARD: SplitRatios = SplitRatios { train: 0.8, validation: 0.1, test: 0.1 };

    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, validation, test };
        r.check()?;
        Ok(r)
    }

    fn check(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::InvalidRatios(alloc::format!("ratios must be positive, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if libm::fabs(sum - 1.0) > 1e-9 {
            return Err(Error::InvalidRatios(alloc::format!("ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// `(train, validation, test)` subset sizes for `n` patients.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The small epsilon keeps exact products such as 10 * 0.1 from
        // flooring to 0 after binary rounding.
        let test = libm::floor(n as f64 * self.test + 1e-9) as usize;
        let validation = libm::floor(n as f64 * self.validation + 1e-9) as usize;
        (n.saturating_sub(test + validation), validation, test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub stratified: bool,
    pub assignment: BTreeMap<String, Subset>,
}

impl SplitAssignment {
    pub fn subset_of(&self, patient_id: &str) -> Option<Subset> {
        self.assignment.get(patient_id).copied()
    }

    /// Patient ids in `subset`, in canonical (sorted) order.
    pub fn members(&self, subset: Subset) -> impl Iterator<Item = &str> {
        self.assignment
            .iter()
            .filter(move |(_, s)| **s == subset)
            .map(|(id, _)| id.as_str())
    }

    pub fn count(&self, subset: Subset) -> usize {
        self.members(subset).count()
    }
}

/// `round(n * part / whole)` with ties away from zero, in integers.
fn round_share(n: usize, part: usize, whole: usize) -> usize {
    (2 * n * part + whole) / (2 * whole)
}

pub fn split_dataset(
    manifest: &Manifest,
    ratios: SplitRatios,
    seed: u64,
    stratified: bool,
) -> Result<SplitAssignment> {
    ratios.check()?;
    let n = manifest.records.len();
    if n == 0 {
        return Err(Error::EmptyManifest);
    }
    let (n_train, n_val, n_test) = ratios.sizes(n);
    for (size, name) in [(n_train, "train"), (n_val, "validation"), (n_test, "test")] {
        if size == 0 {
            return Err(Error::EmptySubset(name));
        }
    }

    let mut records: Vec<(&str, bool)> = manifest
        .records
        .iter()
        .map(|r| (r.patient_id.as_str(), r.label.is_defect()))
        .collect();
    records.sort_unstable_by(|a, b| a.0.cmp(b.0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();

    if stratified {
        let mut defect: Vec<&str> = records.iter().filter(|r| r.1).map(|r| r.0).collect();
        let mut healthy: Vec<&str> = records.iter().filter(|r| !r.1).map(|r| r.0).collect();
        defect.shuffle(&mut rng);
        healthy.shuffle(&mut rng);

        let d = defect.len();
        let d_test = round_share(n_test, d, n);
        let d_val = round_share(n_val, d, n);
        let quotas = [
            (Subset::Test, d_test, n_test - d_test),
            (Subset::Validation, d_val, n_val - d_val),
        ];
        let (mut di, mut hi) = (0, 0);
        for (subset, nd, nh) in quotas {
            for id in &defect[di..di + nd] {
                assignment.insert(String::from(*id), subset);
            }
            for id in &healthy[hi..hi + nh] {
                assignment.insert(String::from(*id), subset);
            }
            di += nd;
            hi += nh;
        }
        for id in defect[di..].iter().chain(healthy[hi..].iter()) {
            assignment.insert(String::from(*id), Subset::Train);
        }
    } else {
        let mut ids: Vec<&str> = records.iter().map(|r| r.0).collect();
        ids.shuffle(&mut rng);
        for (i, id) in ids.into_iter().enumerate() {
            let subset = if i < n_test {
                Subset::Test
            } else if i < n_test + n_val {
                Subset::Validation
            } else {
                Subset::Train
            };
            assignment.insert(String::from(id), subset);
        }
    }

    Ok(SplitAssignment {
        seed,
        ratios: [ratios.train, ratios.validation, ratios.test],
        stratified,
        assignment,
    })
}
