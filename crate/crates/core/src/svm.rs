//! Soft-margin linear SVM trained by sequential minimal optimisation.
//!
//! The dual `min 1/2 a'Qa - e'a  s.t. 0 <= a_i <= C, y'a = 0` with
//! `Q_ij = y_i y_j <x_i, x_j>` is solved two coordinates at a time, always
//! picking the maximal violating pair. Iteration stops once the violation
//! gap `m(a) - M(a)` drops below the tolerance, which bounds every KKT
//! residual `y_i f(x_i) - 1` by that tolerance. Features are z-scored with
//! statistics of the training set before solving.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Feature,
    Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: String,
    #[serde(rename = "C")]
    pub c: f64,
    pub tolerance: f64,
    pub max_passes: usize,
    pub fusion_mode: FusionMode,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: "linear".to_string(),
            c: 1.0,
            tolerance: 1e-3,
            max_passes: 1000,
            fusion_mode: FusionMode::Feature,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel != "linear" {
            return Err(Error::InvalidConfig(alloc::format!("unsupported kernel `{}`", self.kernel)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("C must be > 0, got {}", self.c)));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Per-dimension `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let dim = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; dim];
        for row in x {
            for d in 0..dim {
                scale[d] += (row[d] - mean[d]) * (row[d] - mean[d]) / n;
            }
        }
        for s in scale.iter_mut() {
            let sd = libm::sqrt(*s);
            // constant columns pass through centred but unscaled
            *s = if sd > 1e-12 { sd } else { 1.0 };
        }
        Standardization { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub weight: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl DualSolution {
    /// `sum(a) - 1/2 |w|^2`, the dual objective being maximised.
    pub fn dual_objective(&self) -> f64 {
        self.alpha.iter().sum::<f64>() - 0.5 * dot(&self.weight, &self.weight)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let dim = x[0].len();
    for row in x {
        if row.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
    }
    for &label in y {
        if label != 1.0 && label != -1.0 {
            return Err(Error::InvalidLabel(label));
        }
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::SingleClass);
    }
    Ok(dim)
}

/// Solves the linear soft-margin dual on `x` as given (no scaling).
pub fn solve_dual(x: &[Vec<f64>], y: &[f64], c: f64, tolerance: f64, max_passes: usize) -> Result<DualSolution> {
    let dim = check_inputs(x, y)?;
    let n = x.len();
    let q: Vec<f64> = (0..n * n).map(|k| y[k / n] * y[k % n] * dot(&x[k / n], &x[k % n])).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = max_passes.max(1).saturating_mul(n).max(10_000);
    const TAU: f64 = 1e-12;

    let is_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let is_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if is_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if is_low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (qii, qjj, qij) = (q[i * n + i], q[j * n + j], q[i * n + j]);
        if y[i] != y[j] {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q[t * n + i] * di + q[t * n + j] * dj;
        }
    }

    // rho: mean of y_t G_t over free vectors, else midpoint of the bounds.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };

    let mut weight = vec![0.0; dim];
    for t in 0..n {
        if alpha[t] != 0.0 {
            for d in 0..dim {
                weight[d] += alpha[t] * y[t] * x[t][d];
            }
        }
    }
    Ok(DualSolution { alpha, bias: -rho, weight, iterations, converged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSummary {
    pub count: usize,
    pub bounded: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub config: SvmConfig,
    pub feature_scaling: Standardization,
    /// Weights in the standardised feature space.
    pub weight_vector: Vec<f64>,
    pub bias: f64,
    pub support_indices: Vec<usize>,
    /// Dual coefficients `a_i` of the support vectors, aligned with `support_indices`.
    pub dual_coefficients: Vec<f64>,
    pub support: SupportSummary,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.weight_vector.len()
    }

    /// Signed margin `w . standardize(x) + b`; non-negative means defect.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let z = self.feature_scaling.apply(x);
        Ok(dot(&self.weight_vector, &z) + self.bias)
    }

    /// d decision / d x (constant for the linear kernel).
    pub fn input_gradient(&self) -> Vec<f64> {
        self.weight_vector.iter().zip(&self.feature_scaling.scale).map(|(w, s)| w / s).collect()
    }
}

pub fn train_svm(x: &[Vec<f64>], y: &[f64], config: &SvmConfig) -> Result<SvmModel> {
    config.validate()?;
    check_inputs(x, y)?;
    let scaling = Standardization::fit(x);
    let z: Vec<Vec<f64>> = x.iter().map(|row| scaling.apply(row)).collect();
    let sol = solve_dual(&z, y, config.c, config.tolerance, config.max_passes)?;
    let support_indices: Vec<usize> = (0..sol.alpha.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    let dual_coefficients = support_indices.iter().map(|&i| sol.alpha[i]).collect();
    let bounded = support_indices.iter().filter(|&&i| sol.alpha[i] >= config.c).count();
    Ok(SvmModel {
        config: config.clone(),
        feature_scaling: scaling,
        weight_vector: sol.weight,
        bias: sol.bias,
        support: SupportSummary {
            count: support_indices.len(),
            bounded,
            iterations: sol.iterations,
            converged: sol.converged,
        },
        support_indices,
        dual_coefficients,
    })
}
