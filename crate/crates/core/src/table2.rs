//! The bundled 29-patient test-set reading table and the published summary
//! metrics it is checked against.
//!
//! The published summary rows agree with the standard definitions only up
//! to a relabelling: its "sensitivity, specificity, PPV, NPV" cells equal the
//! standard PPV, NPV, sensitivity and specificity computed from the reading
//! table. [`reproduce_tables`] reports the standard metrics, checks every
//! accuracy cell and audits that transposition cell by cell.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{confusion, diagnostic_metrics, ConfusionMatrix, MetricsRow};
use crate::error::{Error, Result};
use crate::types::Label;

pub const TABLE2_JSON: &str = include_str!("../data/table2.json");
pub const TABLE3_JSON: &str = include_str!("../data/table3.json");

/// Half a percentage point: the published cells carry two decimals of a
/// percentage.
pub const CELL_TOLERANCE: f64 = 0.005;

pub const RATERS: [&str; 5] = ["surgeon", "resident", "cnn1", "cnn2", "cnn3"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub patient_index: u32,
    pub ground_truth: Label,
    pub surgeon: Label,
    pub resident: Label,
    pub cnn1: Label,
    pub cnn2: Label,
    pub cnn3: Label,
}

impl Table2Row {
    pub fn call(&self, rater: &str) -> Option<Label> {
        Some(match rater {
            "surgeon" => self.surgeon,
            "resident" => self.resident,
            "cnn1" => self.cnn1,
            "cnn2" => self.cnn2,
            "cnn3" => self.cnn3,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Dataset {
    pub version: u32,
    pub raters: Vec<String>,
    pub rows: Vec<Table2Row>,
}

impl Table2Dataset {
    pub fn bundled() -> Result<Self> {
        let data: Table2Dataset =
            serde_json::from_str(TABLE2_JSON).map_err(|e| Error::BundledData(e.to_string()))?;
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != 29 {
            return Err(Error::BundledData(alloc::format!("expected 29 rows, found {}", self.rows.len())));
        }
        let defects = self.rows.iter().filter(|r| r.ground_truth.is_defect()).count();
        if defects != 20 {
            return Err(Error::BundledData(alloc::format!("expected 20 defect rows, found {defects}")));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.patient_index as usize != i + 1 {
                return Err(Error::BundledData(alloc::format!("row {} has patient_index {}", i + 1, row.patient_index)));
            }
        }
        Ok(())
    }

    pub fn truth(&self) -> Vec<Label> {
        self.rows.iter().map(|r| r.ground_truth).collect()
    }

    pub fn calls(&self, rater: &str) -> Option<Vec<Label>> {
        self.rows.iter().map(|r| r.call(rater)).collect()
    }

    pub fn confusion(&self, rater: &str) -> Option<ConfusionMatrix> {
        confusion(&self.calls(rater)?, &self.truth()).ok()
    }

    /// Stable patient id used when the table is served as a dataset.
    pub fn patient_id(index: u32) -> String {
        alloc::format!("T2-{index:02}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub ppv: f64,
    pub npv: f64,
}

impl PublishedMetrics {
    fn cell(&self, name: &str) -> f64 {
        match name {
            "accuracy" => self.accuracy,
            "sensitivity" => self.sensitivity,
            "specificity" => self.specificity,
            "ppv" => self.ppv,
            "npv" => self.npv,
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct Table3File {
    published: BTreeMap<String, PublishedMetrics>,
}

pub fn published_metrics() -> Result<BTreeMap<String, PublishedMetrics>> {
    let f: Table3File = serde_json::from_str(TABLE3_JSON).map_err(|e| Error::BundledData(e.to_string()))?;
    for r in RATERS {
        if !f.published.contains_key(r) {
            return Err(Error::BundledData(alloc::format!("published metrics lack rater `{r}`")));
        }
    }
    Ok(f.published)
}

fn standard_value(row: &MetricsRow, name: &str) -> Option<f64> {
    match name {
        "accuracy" => Some(row.accuracy),
        "sensitivity" => row.sensitivity.value(),
        "specificity" => row.specificity.value(),
        "ppv" => row.ppv.value(),
        "npv" => row.npv.value(),
        _ => None,
    }
}

/// Published cell -> standard metric it actually equals.
pub const AUDIT_MAP: [(&str, &str); 4] =
    [("sensitivity", "ppv"), ("specificity", "npv"), ("ppv", "sensitivity"), ("npv", "specificity")];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub published_cell: String,
    pub published: f64,
    pub standard_metric: String,
    pub computed: Option<f64>,
    pub abs_error: Option<f64>,
    pub pass: bool,
}

fn check(published: &PublishedMetrics, cell: &str, row: &MetricsRow, metric: &str) -> CellCheck {
    let p = published.cell(cell);
    let computed = standard_value(row, metric);
    let abs_error = computed.map(|c| libm::fabs(c - p));
    CellCheck {
        published_cell: cell.to_string(),
        published: p,
        standard_metric: metric.to_string(),
        computed,
        abs_error,
        pass: abs_error.is_some_and(|e| e <= CELL_TOLERANCE),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterReproduction {
    pub rater_id: String,
    pub standard: MetricsRow,
    pub published: PublishedMetrics,
    pub accuracy: CellCheck,
    /// Transposed-convention audit: the gating checks.
    pub audit: Vec<CellCheck>,
    /// Same-name comparison, informational only.
    pub same_name: Vec<CellCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionReport {
    pub tolerance: f64,
    pub raters: Vec<RaterReproduction>,
    pub accuracy_pass: bool,
    pub audit_pass: bool,
    pub all_pass: bool,
}

pub fn reproduce_tables(data: &Table2Dataset) -> Result<ReproductionReport> {
    data.validate()?;
    let published = published_metrics()?;
    let mut raters = Vec::with_capacity(RATERS.len());
    for id in RATERS {
        let cm = data
            .confusion(id)
            .ok_or_else(|| Error::BundledData(alloc::format!("unknown rater `{id}`")))?;
        let row = diagnostic_metrics(id, cm)?;
        let pubm = published[id];
        raters.push(RaterReproduction {
            rater_id: id.to_string(),
            accuracy: check(&pubm, "accuracy", &row, "accuracy"),
            audit: AUDIT_MAP.iter().map(|(cell, metric)| check(&pubm, cell, &row, metric)).collect(),
            same_name: AUDIT_MAP.iter().map(|(cell, _)| check(&pubm, cell, &row, cell)).collect(),
            published: pubm,
            standard: row,
        });
    }
    let accuracy_pass = raters.iter().all(|r| r.accuracy.pass);
    let audit_pass = raters.iter().all(|r| r.audit.iter().all(|c| c.pass));
    Ok(ReproductionReport {
        tolerance: CELL_TOLERANCE,
        raters,
        accuracy_pass,
        audit_pass,
        all_pass: accuracy_pass && audit_pass,
    })
}

impl RaterReproduction {
    pub fn ratio(&self, metric: &str) -> Option<f64> {
        standard_value(&self.standard, metric)
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_is_valid() {
        let t = Table2Dataset::bundled().unwrap();
        assert_eq!(t.rows.len(), 29);
        assert_eq!(t.truth().iter().filter(|l| l.is_defect()).count(), 20);
    }

    #[test]
    fn confusion_counts() {
        let t = Table2Dataset::bundled().unwrap();
        let expect = [
            ("surgeon", (19, 1, 4, 5)),
            ("resident", (7, 13, 6, 3)),
            ("cnn1", (20, 0, 3, 6)),
            ("cnn2", (17, 3, 3, 6)),
            ("cnn3", (18, 2, 3, 6)),
        ];
        for (r, counts) in expect {
            assert_eq!(t.confusion(r).unwrap().as_tuple(), counts, "{r}");
        }
    }

    #[test]
    fn reproduction_passes() {
        let report = reproduce_tables(&Table2Dataset::bundled().unwrap()).unwrap();
        assert!(report.all_pass);
        let cnn2 = &report.raters[3];
        assert!((cnn2.ratio("sensitivity").unwrap() - 0.85).abs() < 1e-12);
        assert!((cnn2.ratio("ppv").unwrap() - 0.85).abs() < 1e-12);
        // the same-name reading of the published table does not hold
        let surgeon = &report.raters[0];
        assert!(!surgeon.same_name.iter().all(|c| c.pass));
    }

    #[test]
    fn corrupted_table_is_rejected() {
        let mut t = Table2Dataset::bundled().unwrap();
        t.rows.pop();
        assert!(matches!(reproduce_tables(&t), Err(Error::BundledData(_))));
    }
}
