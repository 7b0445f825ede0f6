//! Independent reference implementations used only by tests.
//!
//! Nothing here calls into the solver, ROC or gradient code it is used to
//! check; the shared pieces are plain data types.
#![allow(dead_code)]

use std::collections::BTreeSet;

/// Dense dual QP for the linear soft-margin SVM, solved by accelerated
/// projected gradient with an exact projection onto
/// `{0 <= a <= C, y'a = 0}`.
pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub weight: Vec<f64>,
    pub bias: f64,
    /// `sum(a) - 1/2 a'Qa`.
    pub objective: f64,
}

fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let clip = |lambda: f64| -> Vec<f64> {
        v.iter().zip(y).map(|(vi, yi)| (vi - lambda * yi).clamp(0.0, c)).collect()
    };
    let g = |lambda: f64| -> f64 { clip(lambda).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    // g is non-increasing and piecewise linear with these breakpoints.
    let mut knots: Vec<f64> = v.iter().zip(y).flat_map(|(vi, yi)| [vi / yi, (vi - c) / yi]).collect();
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    let vals: Vec<f64> = knots.iter().map(|k| g(*k)).collect();
    if vals[0] <= 0.0 {
        return clip(knots[0]);
    }
    for k in 1..knots.len() {
        if vals[k] <= 0.0 {
            let (l0, l1, g0, g1) = (knots[k - 1], knots[k], vals[k - 1], vals[k]);
            let lambda = if g0 == g1 { l0 } else { l0 + (l1 - l0) * g0 / (g0 - g1) };
            return clip(lambda);
        }
    }
    clip(*knots.last().unwrap())
}

pub fn qp_dual(x: &[Vec<f64>], y: &[f64], c: f64, iterations: usize) -> QpSolution {
    let n = x.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * dot(&x[i], &x[j])).collect()).collect();
    let lipschitz = q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let objective = |a: &[f64]| -> f64 {
        let quad: f64 = (0..n).map(|i| a[i] * dot(&q[i], a)).sum();
        a.iter().sum::<f64>() - 0.5 * quad
    };

    let mut alpha = project(&vec![0.0; n], y, c);
    let mut momentum = alpha.clone();
    let mut t = 1.0f64;
    let mut best = objective(&alpha);
    for _ in 0..iterations {
        let grad: Vec<f64> = (0..n).map(|i| dot(&q[i], &momentum) - 1.0).collect();
        let step: Vec<f64> = (0..n).map(|i| momentum[i] - grad[i] / lipschitz).collect();
        let next = project(&step, y, c);
        let obj = objective(&next);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if obj < best - 1e-15 {
            // adaptive restart
            momentum = alpha.clone();
            t = 1.0;
            continue;
        }
        momentum = (0..n).map(|i| next[i] + (t - 1.0) / t_next * (next[i] - alpha[i])).collect();
        alpha = next;
        best = obj;
        t = t_next;
    }

    let dim = x[0].len();
    let mut weight = vec![0.0; dim];
    for i in 0..n {
        for d in 0..dim {
            weight[d] += alpha[i] * y[i] * x[i][d];
        }
    }
    let amax = alpha.iter().cloned().fold(0.0, f64::max);
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > 1e-6 * amax && alpha[i] < c * (1.0 - 1e-6)).collect();
    let bias = if free.is_empty() {
        f64::NAN
    } else {
        free.iter().map(|&i| y[i] - dot(&weight, &x[i])).sum::<f64>() / free.len() as f64
    };
    QpSolution { objective: objective(&alpha), alpha, weight, bias }
}

/// `(#concordant + 1/2 #ties) / (P N)` by enumerating every
/// positive/negative pair, returned as the exact rational's f64 value.
pub fn auc_by_pairs(scores: &[f64], positive: &[bool]) -> f64 {
    let mut twice = 0u128;
    let (mut p, mut n) = (0u128, 0u128);
    for (i, &pi) in positive.iter().enumerate() {
        if pi {
            p += 1;
        } else {
            n += 1;
        }
        if !pi {
            continue;
        }
        for (j, &pj) in positive.iter().enumerate() {
            if pj {
                continue;
            }
            if scores[i] > scores[j] {
                twice += 2;
            } else if scores[i] == scores[j] {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * p * n) as f64
}

/// Central-difference gradient of `f` at `x`, one coordinate at a time.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = probe[k];
            probe[k] = orig + step;
            let up = f(&probe);
            probe[k] = orig - step;
            let down = f(&probe);
            probe[k] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Partition check over three id sets.
pub fn is_partition(all: &BTreeSet<String>, parts: [&BTreeSet<String>; 3]) -> bool {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let union: BTreeSet<&String> = parts.iter().flat_map(|p| p.iter()).collect();
    total == all.len() && union.len() == all.len() && union.into_iter().all(|id| all.contains(id))
}
