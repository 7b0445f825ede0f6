//! Multi-rater evaluation reports and the plot-data block consumed by the
//! SVG emitter and the reader UI.

use std::collections::BTreeMap;

use cartimark_core::diagnostics::{
    confusion, diagnostic_metrics, rater_point, roc_curve, Convention, MetricsRow, RocPoint,
};
use cartimark_core::split::SplitAssignment;
use cartimark_core::table2::{reproduce_tables, ReproductionReport, Table2Dataset, RATERS};
use cartimark_core::{Label, Subset};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{AppError, Result};
use crate::models::PredictionRecord;

/// Ground truth keyed by patient id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Truth(pub BTreeMap<String, Label>);

impl Truth {
    pub fn from_dataset(data: &Dataset, split: Option<&SplitAssignment>, subset: Option<Subset>) -> Result<Self> {
        data.members(split, subset).into_iter().map(|id| Ok((id.clone(), data.label(&id)?))).collect::<Result<_>>().map(Truth)
    }

    pub fn table2(table: &Table2Dataset) -> Self {
        Truth(table.rows.iter().map(|r| (Table2Dataset::patient_id(r.patient_index), r.ground_truth)).collect())
    }
}

/// The bundled reading table as binary-only prediction records.
pub fn table2_predictions(table: &Table2Dataset) -> Vec<PredictionRecord> {
    RATERS
        .iter()
        .flat_map(|rater| {
            table.rows.iter().map(move |r| PredictionRecord {
                patient_id: Table2Dataset::patient_id(r.patient_index),
                rater_id: (*rater).to_string(),
                score: None,
                call: r.call(rater).expect("known rater"),
                threshold: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    pub model_id: String,
    pub auc: f64,
    pub points: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterPoint {
    pub rater_id: String,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub curves: Vec<CurveData>,
    pub rater_points: Vec<RaterPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub convention: Convention,
    pub rows: Vec<MetricsRow>,
    pub audit: Option<ReproductionReport>,
    pub plot: PlotData,
}

/// Groups records by rater (first-appearance order) and scores each rater
/// against `truth`. Raters with scores on every case get a ROC curve;
/// binary-only raters get an overlay point.
pub fn evaluate(records: &[PredictionRecord], truth: &Truth) -> Result<EvaluationReport> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_rater: BTreeMap<&str, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        if !by_rater.contains_key(r.rater_id.as_str()) {
            order.push(&r.rater_id);
        }
        by_rater.entry(&r.rater_id).or_default().push(r);
    }
    let mut rows = Vec::new();
    let mut plot = PlotData::default();
    for rater in order {
        let recs = &by_rater[rater];
        let labels = recs
            .iter()
            .map(|r| truth.0.get(&r.patient_id).copied().ok_or_else(|| AppError::UnknownPatient(r.patient_id.clone())))
            .collect::<Result<Vec<Label>>>()?;
        let calls: Vec<Label> = recs.iter().map(|r| r.call).collect();
        let cm = confusion(&calls, &labels)?;
        rows.push(diagnostic_metrics(rater, cm)?);
        let scores: Option<Vec<f64>> = recs.iter().map(|r| r.score).collect();
        match scores {
            Some(s) => {
                if let Ok(curve) = roc_curve(&s, &labels) {
                    plot.curves.push(CurveData { model_id: rater.to_string(), auc: curve.auc, points: curve.points });
                }
            }
            None => {
                let (fpr, tpr) = rater_point(cm)?;
                plot.rater_points.push(RaterPoint { rater_id: rater.to_string(), fpr, tpr });
            }
        }
    }
    Ok(EvaluationReport { convention: Convention::Standard, rows, audit: None, plot })
}

/// The bundled table evaluated as five binary raters, with the audit block.
pub fn table2_report() -> Result<EvaluationReport> {
    let table = Table2Dataset::bundled()?;
    let mut report = evaluate(&table2_predictions(&table), &Truth::table2(&table))?;
    report.audit = Some(reproduce_tables(&table)?);
    Ok(report)
}
