mod support;

use cartimark_core::diagnostics::{confusion, diagnostic_metrics, roc_curve, ConfusionMatrix};
use cartimark_core::Label;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles::auc_by_pairs;

fn labels(positive: &[bool]) -> Vec<Label> {
    positive.iter().map(|p| Label::from_defect(*p)).collect()
}

/// Every size 2..=20, 50 seeds each, scores drawn from a small grid so ties
/// are frequent.
#[test]
fn auc_equals_pair_count_on_seeded_sweep() {
    let mut checked = 0;
    for n in 2..=20usize {
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + n as u64);
            let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..6u8)) / 5.0).collect();
            let mut positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            positive[0] = true;
            positive[n - 1] = false;
            let curve = roc_curve(&scores, &labels(&positive)).unwrap();
            assert_eq!(curve.auc, auc_by_pairs(&scores, &positive), "n {n} seed {seed}");
            checked += 1;
        }
    }
    assert_eq!(checked, 19 * 50);
}

#[test]
fn twelve_random_scores_match_pair_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let scores: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
    let positive: Vec<bool> = (0..12).map(|i| i % 3 != 0).collect();
    let curve = roc_curve(&scores, &labels(&positive)).unwrap();
    assert_eq!(curve.auc, auc_by_pairs(&scores, &positive));
}

fn scores_and_truth() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..30).prop_flat_map(|n| {
        (
            proptest::collection::vec(-5.0f64..5.0, n),
            proptest::collection::vec(any::<bool>(), n).prop_map(|mut v| {
                v[0] = true;
                let last = v.len() - 1;
                v[last] = false;
                v
            }),
        )
    })
}

proptest! {
    #[test]
    fn auc_is_invariant_under_monotone_maps((scores, truth) in scores_and_truth(), a in 0.1f64..10.0, b in -3.0f64..3.0) {
        let t = labels(&truth);
        let base = roc_curve(&scores, &t).unwrap().auc;
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let cubic: Vec<f64> = scores.iter().map(|s| s * s * s + s).collect();
        let logistic: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
        prop_assert_eq!(roc_curve(&affine, &t).unwrap().auc, base);
        prop_assert_eq!(roc_curve(&cubic, &t).unwrap().auc, base);
        prop_assert_eq!(roc_curve(&logistic, &t).unwrap().auc, base);
    }

    #[test]
    fn roc_is_monotone_with_fixed_endpoints((scores, truth) in scores_and_truth()) {
        let curve = roc_curve(&scores, &labels(&truth)).unwrap();
        let first = curve.points.first().unwrap();
        let last = curve.points.last().unwrap();
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in curve.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        prop_assert!((0.0..=1.0).contains(&curve.auc));
    }

    #[test]
    fn accuracy_decomposes_over_prevalence(tp in 0u64..40, fn_ in 0u64..40, fp in 0u64..40, tn in 0u64..40) {
        let cm = ConfusionMatrix::new(tp, fn_, fp, tn);
        prop_assume!(cm.positives() > 0 && cm.negatives() > 0);
        let row = diagnostic_metrics("r", cm).unwrap();
        let prevalence = cm.positives() as f64 / cm.total() as f64;
        let recomposed = row.sensitivity.value().unwrap() * prevalence
            + row.specificity.value().unwrap() * (1.0 - prevalence);
        prop_assert!((row.accuracy - recomposed).abs() < 1e-12);
        prop_assert_eq!(row.accuracy, (tp + tn) as f64 / cm.total() as f64);
    }

    #[test]
    fn confusion_counts_sum_to_length(calls in proptest::collection::vec(any::<bool>(), 1..40), seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<bool> = calls.iter().map(|_| rng.random_bool(0.5)).collect();
        let cm = confusion(&labels(&calls), &labels(&truth)).unwrap();
        prop_assert_eq!(cm.total() as usize, calls.len());
        prop_assert_eq!(cm.positives() as usize, truth.iter().filter(|t| **t).count());
    }
}
