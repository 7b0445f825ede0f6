mod support;

use cartimark_core::classifier::SingleViewModel;
use cartimark_core::diagnostics::{confusion, rater_point, roc_curve};
use cartimark_core::fusion::{fused_dim, fused_input, train_fusion, DualViewModel, PairSample, DEFAULT_C_GRID};
use cartimark_core::phantom::PhantomConfig;
use cartimark_core::svm::{FusionMode, SvmConfig};
use cartimark_core::train::{train_classifier, TrainConfig};
use cartimark_core::{Label, Subset, View};
use support::phantom_set::{cohort, tiny, Cohort};

fn setup() -> (Cohort, SingleViewModel, SingleViewModel) {
    let c = cohort(&PhantomConfig { n_patients: 60, seed: 7, ..PhantomConfig::default() }, 42);
    let config = TrainConfig { epochs: 5, learning_rate: 1e-2, ..TrainConfig::default() };
    let train = |view| {
        train_classifier(tiny(32), view, &c.samples(Subset::Train, view), &[], &config, &mut |_| {}).unwrap().model
    };
    let (s, k) = (train(View::Sagittal), train(View::Coronal));
    (c, s, k)
}

fn svm(mode: FusionMode) -> SvmConfig {
    SvmConfig { fusion_mode: mode, ..SvmConfig::default() }
}

fn fit(c: &Cohort, s: &SingleViewModel, k: &SingleViewModel, mode: FusionMode) -> DualViewModel<cartimark_core::backbone::TinyBackbone> {
    train_fusion(s.clone(), k.clone(), &c.pairs(Subset::Train), &c.pairs(Subset::Validation), &svm(mode), &DEFAULT_C_GRID)
        .unwrap()
        .0
}

#[test]
fn fused_input_width_matches_mode() {
    let (c, s, k) = setup();
    let p = &c.pairs(Subset::Test)[0];
    assert_eq!(fused_input(&s, &k, FusionMode::Feature, &p.sagittal, &p.coronal).len(), 32);
    assert_eq!(fused_dim(&s, &k, FusionMode::Feature), 32);
    assert_eq!(fused_input(&s, &k, FusionMode::Score, &p.sagittal, &p.coronal).len(), 2);
    assert_eq!(fused_dim(&s, &k, FusionMode::Score), 2);
    for mode in [FusionMode::Feature, FusionMode::Score] {
        assert_eq!(fit(&c, &s, &k, mode).svm.dim(), fused_dim(&s, &k, mode));
    }
}

#[test]
fn c_is_chosen_on_validation_from_the_grid() {
    let (c, s, k) = setup();
    let (model, candidates) = train_fusion(
        s,
        k,
        &c.pairs(Subset::Train),
        &c.pairs(Subset::Validation),
        &SvmConfig::default(),
        &DEFAULT_C_GRID,
    )
    .unwrap();
    assert_eq!(candidates.iter().map(|x| x.c).collect::<Vec<_>>(), DEFAULT_C_GRID.to_vec());
    let best = candidates.iter().filter_map(|x| x.validation_accuracy).fold(0.0, f64::max);
    let first = candidates.iter().find(|x| x.validation_accuracy == Some(best)).unwrap();
    assert_eq!(model.svm.config.c, first.c);
    assert_eq!(model.threshold, 0.0);
}

#[test]
fn duplicated_score_coordinates_still_train() {
    let (c, s, _) = setup();
    let mut twin = s.clone();
    twin.view = View::Coronal;
    // Both "views" see the sagittal image, so the score pair is (s, s).
    let dup = |pairs: Vec<PairSample>| -> Vec<PairSample> {
        pairs.into_iter().map(|p| PairSample { coronal: p.sagittal.clone(), ..p }).collect()
    };
    let (model, _) = train_fusion(
        s.clone(),
        twin,
        &dup(c.pairs(Subset::Train)),
        &dup(c.pairs(Subset::Validation)),
        &svm(FusionMode::Score),
        &DEFAULT_C_GRID,
    )
    .unwrap();
    let p = &dup(c.pairs(Subset::Test))[0];
    let x = fused_input(&model.sagittal, &model.coronal, FusionMode::Score, &p.sagittal, &p.coronal);
    assert_eq!(x[0], x[1]);
    assert!(model.margin_tensors(&p.sagittal, &p.coronal).unwrap().is_finite());
}

#[test]
fn score_mode_margin_is_monotone_in_both_scores() {
    let (c, s, k) = setup();
    let model = fit(&c, &s, &k, FusionMode::Score);
    assert!(model.svm.weight_vector.iter().all(|w| *w > 0.0), "{:?}", model.svm.weight_vector);
    let grid: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
    for &a in &grid {
        for &b in &grid {
            let base = model.svm.decision(&[a, b]).unwrap();
            for (da, db) in [(0.05, 0.0), (0.0, 0.05), (0.1, 0.1)] {
                assert!(model.svm.decision(&[a + da, b + db]).unwrap() >= base);
            }
        }
    }
}

#[test]
fn threshold_sweep_reproduces_roc_points() {
    let (c, s, k) = setup();
    let model = fit(&c, &s, &k, FusionMode::Feature);
    let pairs: Vec<PairSample> = c.pairs(Subset::Test).into_iter().chain(c.pairs(Subset::Validation)).collect();
    let margins: Vec<f64> = pairs.iter().map(|p| model.margin_tensors(&p.sagittal, &p.coronal).unwrap()).collect();
    let truth: Vec<Label> = pairs.iter().map(|p| p.label).collect();
    let curve = roc_curve(&margins, &truth).unwrap();
    for point in curve.points.iter().filter(|p| p.threshold.is_some()) {
        let t = point.threshold.unwrap();
        let calls: Vec<Label> = margins.iter().map(|m| Label::from_defect(*m >= t)).collect();
        let (fpr, tpr) = rater_point(confusion(&calls, &truth).unwrap()).unwrap();
        assert_eq!((fpr, tpr), (point.fpr, point.tpr));
    }
}

#[test]
fn fusion_rejects_bad_inputs() {
    let (c, s, k) = setup();
    let one_class: Vec<PairSample> = c.pairs(Subset::Train).into_iter().filter(|p| p.label.is_defect()).collect();
    let err = train_fusion(s.clone(), k.clone(), &one_class, &[], &SvmConfig::default(), &DEFAULT_C_GRID).unwrap_err();
    assert_eq!(err.code(), "single_class_training_set");
    let err = train_fusion(k.clone(), s.clone(), &c.pairs(Subset::Train), &[], &SvmConfig::default(), &DEFAULT_C_GRID)
        .unwrap_err();
    assert_eq!(err.code(), "view_mismatch");
}
