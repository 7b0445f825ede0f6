//! Exhaustive hyperparameter grids and the leaderboard selection rule.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::diagnostics::roc_curve;
use crate::error::{Error, Result};
use crate::train::{accuracy, train_classifier, TrainConfig, TrainOutcome, TrainSample};
use crate::types::{Label, View};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Ordered axes; points enumerate with the first axis varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub axes: Vec<GridAxis>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            axes: vec![
                GridAxis { name: "learning_rate".into(), values: vec![1e-3, 1e-4] },
                GridAxis { name: "frozen_fraction".into(), values: vec![1.0, 0.8] },
                GridAxis { name: "epochs".into(), values: vec![10.0, 30.0] },
            ],
        }
    }
}

fn apply(config: &mut TrainConfig, name: &str, value: f64) -> Result<()> {
    let as_count = |v: f64| -> Result<usize> {
        if v >= 0.0 && libm::trunc(v) == v {
            Ok(v as usize)
        } else {
            Err(Error::InvalidConfig(alloc::format!("{name} must be a non-negative integer, got {v}")))
        }
    };
    match name {
        "learning_rate" => config.learning_rate = value,
        "epochs" => config.epochs = as_count(value)?,
        "batch_size" => config.batch_size = as_count(value)?,
        "frozen_fraction" => config.frozen_fraction = value,
        "augment" => config.augment = value != 0.0,
        "seed" => config.seed = as_count(value)? as u64,
        "threshold" => config.threshold = value,
        other => return Err(Error::InvalidConfig(alloc::format!("unknown grid axis `{other}`"))),
    }
    Ok(())
}

impl HyperGrid {
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty() || self.len() == 0
    }

    /// Every grid point applied on top of `base`, in grid order.
    pub fn configs(&self, base: &TrainConfig) -> Result<Vec<TrainConfig>> {
        if self.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut out = Vec::with_capacity(self.len());
        let mut counter = vec![0usize; self.axes.len()];
        loop {
            let mut cfg = base.clone();
            for (axis, &k) in self.axes.iter().zip(&counter) {
                apply(&mut cfg, &axis.name, axis.values[k])?;
            }
            cfg.validate()?;
            out.push(cfg);
            // odometer increment, last axis fastest
            let mut pos = self.axes.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                counter[pos] += 1;
                if counter[pos] < self.axes[pos].values.len() {
                    break;
                }
                counter[pos] = 0;
            }
        }
    }

    /// Parses `name=v1,v2;name=v3`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut axes = Vec::new();
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, values) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(alloc::format!("grid axis `{part}` lacks `=`")))?;
            let values = values
                .split(',')
                .map(|v| {
                    let v = v.trim();
                    match v {
                        "true" => Ok(1.0),
                        "false" => Ok(0.0),
                        _ => v.parse::<f64>().map_err(|_| Error::InvalidConfig(alloc::format!("bad grid value `{v}`"))),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            axes.push(GridAxis { name: name.trim().to_string(), values });
        }
        let grid = HyperGrid { axes };
        if grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub index: usize,
    pub config: TrainConfig,
    pub validation_accuracy: Option<f64>,
    pub validation_auc: Option<f64>,
}

fn cmp_metric(a: Option<f64>, b: Option<f64>) -> Ordering {
    let key = |v: Option<f64>| v.filter(|x| x.is_finite()).unwrap_or(f64::NEG_INFINITY);
    key(a).partial_cmp(&key(b)).unwrap_or(Ordering::Equal)
}

/// Highest validation accuracy; ties go to higher AUC, then fewer epochs,
/// then earlier grid order.
pub fn select_best(entries: &[LeaderboardEntry]) -> Option<usize> {
    (0..entries.len()).reduce(|best, i| {
        let (a, b) = (&entries[i], &entries[best]);
        let better = cmp_metric(a.validation_accuracy, b.validation_accuracy)
            .then_with(|| cmp_metric(a.validation_auc, b.validation_auc))
            .then_with(|| b.config.epochs.cmp(&a.config.epochs))
            .then_with(|| b.index.cmp(&a.index));
        if better == Ordering::Greater {
            i
        } else {
            best
        }
    })
}

/// Validation AUC of a trained model, when both classes are present.
pub fn validation_auc<B: Backbone>(outcome: &TrainOutcome<B>, validation: &[TrainSample]) -> Option<f64> {
    let scores: Vec<f64> = validation.iter().map(|s| outcome.model.score_tensor(&s.input)).collect();
    let truth: Vec<Label> = validation.iter().map(|s| s.label).collect();
    roc_curve(&scores, &truth).ok().map(|c| c.auc)
}

#[derive(Debug, Clone)]
pub struct GridOutcome<B> {
    pub best: usize,
    pub leaderboard: Vec<LeaderboardEntry>,
    pub outcome: TrainOutcome<B>,
}

/// Trains one model per grid point and keeps the [`select_best`] winner.
///
/// `make_backbone` supplies a fresh backbone for every point. Failures are
/// wrapped in [`Error::GridPoint`].
pub fn grid_search<B: Backbone>(
    make_backbone: &mut dyn FnMut() -> Result<B>,
    view: View,
    train: &[TrainSample],
    validation: &[TrainSample],
    grid: &HyperGrid,
    base: &TrainConfig,
    observer: &mut dyn FnMut(&str),
) -> Result<GridOutcome<B>> {
    let configs = grid.configs(base)?;
    let mut leaderboard = Vec::with_capacity(configs.len());
    let mut outcomes = Vec::with_capacity(configs.len());
    for (index, config) in configs.into_iter().enumerate() {
        let wrap = |e: Error| Error::GridPoint { index, source: alloc::boxed::Box::new(e) };
        let backbone = make_backbone().map_err(wrap)?;
        let outcome = train_classifier(backbone, view, train, validation, &config, observer).map_err(wrap)?;
        leaderboard.push(LeaderboardEntry {
            index,
            validation_accuracy: accuracy(&outcome.model, validation),
            validation_auc: validation_auc(&outcome, validation),
            config,
        });
        outcomes.push(outcome);
    }
    let best = select_best(&leaderboard).ok_or(Error::EmptyGrid)?;
    let outcome = outcomes.swap_remove(best);
    Ok(GridOutcome { best, leaderboard, outcome })
}
