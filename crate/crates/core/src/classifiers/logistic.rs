use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{sigmoid, Convergence, LabeledDataset, TrainError};
use crate::features::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    /// L2 penalty on the weights (bias is not penalized).
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LrParams {
    fn default() -> Self {
        Self {
            l2: 0.01,
            max_iter: 100,
            tol: 1e-6,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: f64,
}

impl LogisticRegression {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn logit(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn score(&self, x: &SparseVector) -> f64 {
        sigmoid(self.logit(x))
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss plus `l2/2 * ||w||^2`, with its gradient.
///
/// `params` holds the weights followed by the bias. Returns the objective and
/// the gradient in the same layout.
pub fn logistic_objective(params: &[f64], data: &LabeledDataset, l2: f64) -> (f64, Vec<f64>) {
    let dim = data.dim();
    let (weights, bias) = (&params[..dim], params[dim]);
    let n = data.len().max(1) as f64;
    let mut grad = vec![0.0; dim + 1];
    let mut loss = 0.0;
    for row in data.rows() {
        let z = row.features.dot(weights) + bias;
        let y = row.label as f64;
        loss += softplus(z) - y * z;
        let residual = (sigmoid(z) - y) / n;
        for (i, v) in row.features.iter() {
            grad[i] += residual * v;
        }
        grad[dim] += residual;
    }
    loss /= n;
    let mut penalty = 0.0;
    for (g, w) in grad[..dim].iter_mut().zip(weights) {
        *g += l2 * w;
        penalty += w * w;
    }
    (loss + 0.5 * l2 * penalty, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Limited-memory BFGS with Armijo backtracking.
pub(crate) fn lbfgs(
    mut objective: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    mut x: Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, Convergence) {
    const MEMORY: usize = 10;
    const ARMIJO: f64 = 1e-4;
    let (mut f, mut g) = objective(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = norm(&g) < tol;

    while !converged && iterations < max_iter {
        // two-loop recursion: d = -H g
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .unwrap_or_else(|| 1.0 / norm(&g).max(1.0));
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut direction: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &direction);
        if !(slope < 0.0) {
            history.clear();
            let scale = 1.0 / norm(&g).max(1.0);
            direction = g.iter().map(|v| -v * scale).collect();
            slope = dot(&g, &direction);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + step * di).collect();
            let (fc, gc) = objective(&candidate);
            if fc.is_finite() && fc <= f + ARMIJO * step * slope {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        converged = norm(&g) < tol;
    }

    (
        x,
        Convergence {
            iterations,
            converged,
            final_objective: f,
            trace,
        },
    )
}

/// Binary logistic regression with L2 penalty, fitted by L-BFGS from zero weights.
pub fn train_lr(data: &LabeledDataset, params: &LrParams) -> Result<(LogisticRegression, Convergence), TrainError> {
    if !(params.l2 >= 0.0) {
        return Err(TrainError::InvalidParameter(format!("l2 must be >= 0, got {}", params.l2)));
    }
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let dim = data.dim();
    let (theta, conv) = lbfgs(
        |p| logistic_objective(p, data, params.l2),
        vec![0.0; dim + 1],
        params.max_iter,
        params.tol,
    );
    let bias = theta[dim];
    let mut weights = theta;
    weights.truncate(dim);
    Ok((LogisticRegression { weights, bias }, conv))
}
