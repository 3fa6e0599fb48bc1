//! L2-regularized multinomial logistic regression fitted by L-BFGS.
//!
//! The objective over parameters `W` (`C × F`) and `b` (`C`) is
//!
//! ```text
//! L(W, b) = (1/n) * [ sum_i -log softmax(W x_i + b)[y_i] + (lambda/2) * ||W||^2 ]
//! ```
//!
//! which is the inverse-regularization form `C = 1/lambda` used by common
//! reference implementations; the bias is not penalized.

use std::cmp::Ordering;
use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub l2_lambda: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the max-abs gradient entry.
    pub tolerance: f64,
    /// Unused by the deterministic solver; recorded for provenance.
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 1.0,
            max_iterations: 500,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::Config(format!("l2_lambda must be a nonnegative number, got {}", self.l2_lambda)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        crate::checksum::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())[..16].to_string()
    }
}

/// How the optimizer finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStatus {
    pub converged: bool,
    pub iterations: usize,
    /// Max-abs gradient entry at the returned parameters.
    pub grad_norm: f64,
    pub loss: f64,
    /// Objective value after every accepted step (first entry: initial point).
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SoftmaxFit {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub status: TrainStatus,
}

/// Value and gradient of the objective at `theta = [W row-major, b]`.
pub fn objective(theta: &[f64], x: ArrayView2<f64>, y: &[usize], n_classes: usize, lambda: f64) -> (f64, Vec<f64>) {
    let (n, f) = x.dim();
    let c = n_classes;
    let w = ndarray::ArrayView2::from_shape((c, f), &theta[..c * f]).expect("theta sized");
    let b = &theta[c * f..];
    let mut logits = x.dot(&w.t());
    let mut loss = 0.0;
    for (i, mut row) in logits.axis_iter_mut(Axis(0)).enumerate() {
        row.iter_mut().zip(b).for_each(|(v, bj)| *v += bj);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[y[i]];
        row.mapv_inplace(|v| (v - lse).exp());
        row[y[i]] -= 1.0;
    }
    // `logits` now holds P - Y
    let wsq: f64 = w.iter().map(|v| v * v).sum();
    loss = (loss + 0.5 * lambda * wsq) / n as f64;
    let mut gw = logits.t().dot(&x);
    gw.zip_mut_with(&w, |g, wv| *g = (*g + lambda * wv) / n as f64);
    let gb = logits.sum_axis(Axis(0)) / n as f64;
    let mut grad = gw.into_raw_vec_and_offset().0;
    grad.extend(gb.iter());
    (loss, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Row order used for training: by label, then lexicographically by
/// feature values. Makes the fit independent of input row order.
fn canonical_order(x: ArrayView2<f64>, y: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| {
        y[a].cmp(&y[b]).then_with(|| {
            x.row(a)
                .iter()
                .zip(x.row(b).iter())
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });
    idx
}

/// Fits a softmax regression on already-standardized features.
pub fn fit_softmax(x: ArrayView2<f64>, y: &[usize], n_classes: usize, config: &ProbeConfig) -> Result<SoftmaxFit> {
    config.validate()?;
    let (n, f) = x.dim();
    if n != y.len() {
        return Err(Error::Shape(format!("{n} rows but {} labels", y.len())));
    }
    if n == 0 {
        return Err(Error::Empty("no training rows".into()));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Shape(format!("label {bad} outside {n_classes} classes")));
    }
    if y.iter().all(|&l| l == y[0]) {
        return Err(Error::SingleClass);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probe training features".into()));
    }
    let order = canonical_order(x, y);
    let xs = x.select(Axis(0), &order);
    let ys: Vec<usize> = order.iter().map(|&i| y[i]).collect();
    let eval = |theta: &[f64]| objective(theta, xs.view(), &ys, n_classes, config.l2_lambda);

    let dim = n_classes * f + n_classes;
    let mut theta = vec![0.0; dim];
    let (mut loss, mut grad) = eval(&theta);
    let mut trace = vec![loss];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    const M: usize = 10;
    let mut iterations = 0;
    let mut converged = max_abs(&grad) <= config.tolerance;

    while !converged && iterations < config.max_iterations {
        // two-loop recursion
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, yv, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = memory.back().map_or(1.0, |(s, yv, _)| dot(s, yv) / dot(yv, yv));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, yv, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let bcoef = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - bcoef) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            memory.clear();
            dir = grad.iter().map(|v| -v).collect();
            slope = dot(&grad, &dir);
        }
        let mut step = if memory.is_empty() {
            (1.0 / max_abs(&grad).max(1e-300)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let (l, g) = eval(&cand);
            if l.is_finite() && l <= loss + 1e-4 * step * slope {
                accepted = Some((cand, l, g));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_loss, next_grad)) = accepted else {
            if memory.is_empty() {
                break;
            }
            memory.clear();
            continue;
        };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&yv, &yv).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if memory.len() == M {
                memory.pop_front();
            }
            memory.push_back((s, yv, 1.0 / sy));
        }
        theta = next;
        loss = next_loss;
        grad = next_grad;
        trace.push(loss);
        iterations += 1;
        converged = max_abs(&grad) <= config.tolerance;
    }

    let weights = Array2::from_shape_vec((n_classes, f), theta[..n_classes * f].to_vec()).expect("sized");
    let bias = Array1::from_vec(theta[n_classes * f..].to_vec());
    Ok(SoftmaxFit {
        weights,
        bias,
        status: TrainStatus {
            converged,
            iterations,
            grad_norm: max_abs(&grad),
            loss,
            loss_trace: trace,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_problem(seed: u64, n: usize, f: usize, c: usize) -> (Array2<f64>, Vec<usize>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, f), || rng.random_range(-2.0..2.0));
        let mut y: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        y[0] = 0;
        y[1] = 1;
        (x, y)
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..20 {
            let (x, y) = random_problem(seed, 20, 4, 3);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + seed);
            let theta: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, g) = objective(&theta, x.view(), &y, 3, 0.7);
            let h = 1e-5;
            let fd: Vec<f64> = (0..theta.len())
                .map(|k| {
                    let mut p = theta.clone();
                    let mut m = theta.clone();
                    p[k] += h;
                    m[k] -= h;
                    (objective(&p, x.view(), &y, 3, 0.7).0 - objective(&m, x.view(), &y, 3, 0.7).0) / (2.0 * h)
                })
                .collect();
            let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(diff / norm <= 1e-5, "seed {seed}: {}", diff / norm);
        }
    }

    #[test]
    fn loss_is_non_increasing_and_converges() {
        let (x, y) = random_problem(7, 200, 5, 4);
        let fit = fit_softmax(x.view(), &y, 4, &ProbeConfig::default()).unwrap();
        assert!(fit.status.converged, "{:?}", fit.status);
        for w in fit.status.loss_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Array2::zeros((4, 2));
        assert!(matches!(fit_softmax(x.view(), &[2; 4], 5, &ProbeConfig::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn permutation_invariance_is_exact() {
        let (x, y) = random_problem(9, 60, 3, 3);
        let cfg = ProbeConfig::default();
        let a = fit_softmax(x.view(), &y, 3, &cfg).unwrap();
        let perm: Vec<usize> = (0..60).rev().collect();
        let xp = x.select(Axis(0), &perm);
        let yp: Vec<usize> = perm.iter().map(|&i| y[i]).collect();
        let b = fit_softmax(xp.view(), &yp, 3, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }
}
