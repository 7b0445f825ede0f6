//! Confusion matrices, the five standard diagnostic ratios, ROC curves and
//! rater overlay points. `Defect` is the positive class.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub const fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn as_tuple(&self) -> (u64, u64, u64, u64) {
        (self.tp, self.fn_, self.fp, self.tn)
    }
}

/// A ratio whose denominator may be zero. Serialises as a number or the
/// string `"undefined"`, never as a silent 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Value(f64),
    Undefined,
}

impl Ratio {
    pub fn of(num: u64, den: u64) -> Self {
        if den == 0 {
            Ratio::Undefined
        } else {
            Ratio::Value(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(v),
            Ratio::Undefined => None,
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            Ratio::Value(v) => s.serialize_f64(*v),
            Ratio::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Ratio::Value(v)),
            Repr::Text(t) if t == "undefined" => Ok(Ratio::Undefined),
            Repr::Text(t) => Err(serde::de::Error::custom(alloc::format!("unexpected ratio `{t}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    Standard,
    /// Cell layout of the published summary table.
    #[serde(rename = "paper_table3")]
    Published,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub rater_id: String,
    pub accuracy: f64,
    pub sensitivity: Ratio,
    pub specificity: Ratio,
    pub ppv: Ratio,
    pub npv: Ratio,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub convention: Convention,
    pub rows: Vec<MetricsRow>,
}

pub fn confusion(calls: &[Label], truth: &[Label]) -> Result<ConfusionMatrix> {
    if calls.len() != truth.len() {
        return Err(Error::LengthMismatch { left: calls.len(), right: truth.len() });
    }
    if calls.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (c, t) in calls.iter().zip(truth) {
        match (c.is_defect(), t.is_defect()) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fn_ += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

pub fn diagnostic_metrics(rater_id: &str, cm: ConfusionMatrix) -> Result<MetricsRow> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(MetricsRow {
        rater_id: String::from(rater_id),
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        sensitivity: Ratio::of(cm.tp, cm.tp + cm.fn_),
        specificity: Ratio::of(cm.tn, cm.tn + cm.fp),
        ppv: Ratio::of(cm.tp, cm.tp + cm.fp),
        npv: Ratio::of(cm.tn, cm.tn + cm.fn_),
        confusion: cm,
    })
}

/// `(fpr, tpr)` of a binary-only rater. Undefined axes (a class absent from
/// the truth) are reported as 0.
pub fn rater_point(cm: ConfusionMatrix) -> Result<(f64, f64)> {
    if cm.total() == 0 {
        return Err(Error::EmptyInput);
    }
    let fpr = Ratio::of(cm.fp, cm.negatives()).value().unwrap_or(0.0);
    let tpr = Ratio::of(cm.tp, cm.positives()).value().unwrap_or(0.0);
    Ok((fpr, tpr))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Score cutoff (`score >= threshold` is a defect call); `None` for the
    /// origin, where nothing is called positive.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC over the unique scores in descending order, tied scores forming a
/// single step. The area is accumulated in integers as
/// `sum(d_fp * (tp_prev + tp)) / (2 P N)`, which equals the Mann-Whitney
/// statistic exactly.
pub fn roc_curve(scores: &[f64], truth: &[Label]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: truth.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let p = truth.iter().filter(|t| t.is_defect()).count() as u64;
    let n = truth.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push(RocPoint { fpr: 0.0, tpr: 0.0, threshold: None });
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area: u128 = 0;
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        let (prev_tp, prev_fp) = (tp, fp);
        while k < order.len() && scores[order[k]] == threshold {
            if truth[order[k]].is_defect() {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        twice_area += u128::from(fp - prev_fp) * u128::from(prev_tp + tp);
        points.push(RocPoint { fpr: fp as f64 / n as f64, tpr: tp as f64 / p as f64, threshold: Some(threshold) });
    }
    let auc = twice_area as f64 / (2 * u128::from(p) * u128::from(n)) as f64;
    Ok(RocCurve { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use Label::{Defect as D, NoDefect as N};

    #[test]
    fn perfect_rater() {
        let truth = [D, D, N, D, N];
        let cm = confusion(&truth, &truth).unwrap();
        assert_eq!(cm.as_tuple(), (3, 0, 0, 2));
        let row = diagnostic_metrics("r", cm).unwrap();
        assert_eq!(row.accuracy, 1.0);
        for r in [row.sensitivity, row.specificity, row.ppv, row.npv] {
            assert_eq!(r, Ratio::Value(1.0));
        }
        assert_eq!(rater_point(cm).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn cnn1_counts_metrics() {
        let row = diagnostic_metrics("cnn1", ConfusionMatrix::new(20, 0, 3, 6)).unwrap();
        let close = |r: Ratio, v: f64| (r.value().unwrap() - v).abs() < 5e-5;
        assert!((row.accuracy - 0.8966).abs() < 5e-5);
        assert!(close(row.sensitivity, 1.0));
        assert!(close(row.specificity, 0.6667));
        assert!(close(row.ppv, 0.8696));
        assert!(close(row.npv, 1.0));
        let surgeon = diagnostic_metrics("s", ConfusionMatrix::new(19, 1, 4, 5)).unwrap();
        assert!((surgeon.accuracy - 0.8276).abs() < 5e-5);
    }

    #[test]
    fn zero_denominators_are_undefined() {
        let row = diagnostic_metrics("all-no", ConfusionMatrix::new(0, 3, 0, 2)).unwrap();
        assert_eq!(row.ppv, Ratio::Undefined);
        assert_eq!(serde_json::to_string(&row.ppv).unwrap(), "\"undefined\"");
        assert!(diagnostic_metrics("x", ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn rater_points() {
        let (fpr, tpr) = rater_point(ConfusionMatrix::new(19, 1, 4, 5)).unwrap();
        assert!((fpr - 0.4444).abs() < 5e-5 && (tpr - 0.95).abs() < 1e-12);
        assert_eq!(rater_point(ConfusionMatrix::new(4, 0, 3, 0)).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn roc_edge_cases() {
        let separated = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[D, D, N, N]).unwrap();
        assert_eq!(separated.auc, 1.0);
        let flat = roc_curve(&[0.5; 4], &[D, N, D, N]).unwrap();
        assert_eq!(flat.auc, 0.5);
        let coords: Vec<(f64, f64)> = flat.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(coords, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(roc_curve(&[0.1, 0.2], &[D, D]), Err(Error::SingleClass));
        assert!(confusion(&[D], &[]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }
}
