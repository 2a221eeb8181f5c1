use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Convergence, LabeledDataset, TrainError};
use crate::features::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvcParams {
    /// Misclassification penalty; the regularization strength is `1 / (c * n)`.
    pub c: f64,
    /// Number of passes over the data.
    pub max_iter: usize,
    /// Stop after a few epochs in a row improve the objective by less than this (relative).
    pub tol: f64,
    pub seed: u64,
}

impl Default for SvcParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iter: 50,
            tol: 1e-6,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvc {
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: f64,
}

impl LinearSvc {
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

    /// Signed distance proxy `w.x + b`; positive means the suicide class.
    pub fn margin(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }
}

/// `lambda/2 * (||w||^2 + b^2) + mean(max(0, 1 - y (w.x + b)))` with `y` in {-1, +1}.
///
/// The bias is treated as the weight of a constant feature and so is penalized too.
pub fn hinge_objective(weights: &[f64], bias: f64, data: &LabeledDataset, lambda: f64) -> f64 {
    let n = data.len().max(1) as f64;
    let hinge: f64 = data
        .rows()
        .iter()
        .map(|r| {
            let y = if r.label == 1 { 1.0 } else { -1.0 };
            (1.0 - y * (r.features.dot(weights) + bias)).max(0.0)
        })
        .sum();
    let sq: f64 = weights.iter().map(|w| w * w).sum::<f64>() + bias * bias;
    0.5 * lambda * sq + hinge / n
}

/// Epochs without relative improvement above `tol` before stopping.
const PATIENCE: usize = 3;

/// Weight vector stored as `scale * values` so the per-step shrink is O(1).
struct ScaledVector {
    scale: f64,
    values: Vec<f64>,
    /// Squared norm of `values`.
    sq_norm: f64,
}

impl ScaledVector {
    fn new(dim: usize) -> Self {
        Self {
            scale: 1.0,
            values: vec![0.0; dim],
            sq_norm: 0.0,
        }
    }

    fn dot(&self, x: &SparseVector, bias_slot: usize) -> f64 {
        self.scale * (x.dot(&self.values) + self.values[bias_slot])
    }

    fn shrink(&mut self, factor: f64) {
        if factor <= 0.0 {
            self.values.iter_mut().for_each(|v| *v = 0.0);
            self.scale = 1.0;
            self.sq_norm = 0.0;
        } else {
            self.scale *= factor;
        }
        if self.scale < 1e-9 {
            self.renormalize();
        }
    }

    fn add(&mut self, x: &SparseVector, bias_slot: usize, coef: f64) {
        let c = coef / self.scale;
        for (i, v) in x.iter().chain(std::iter::once((bias_slot, 1.0))) {
            let old = self.values[i];
            let new = old + c * v;
            self.sq_norm += new * new - old * old;
            self.values[i] = new;
        }
    }

    fn norm(&self) -> f64 {
        self.scale.abs() * self.sq_norm.max(0.0).sqrt()
    }

    fn renormalize(&mut self) {
        let s = self.scale;
        self.values.iter_mut().for_each(|v| *v *= s);
        self.sq_norm = self.values.iter().map(|v| v * v).sum();
        self.scale = 1.0;
    }

    fn materialize(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * self.scale).collect()
    }
}

/// Linear SVM by stochastic subgradient descent (Pegasos step sizes and
/// projection) with epoch-averaged iterates.
///
/// After every epoch both the current iterate and the running average of
/// epoch-end iterates are scored on the full objective; the best point seen
/// so far is kept, so the returned trace is non-increasing.
pub fn train_linear_svc(data: &LabeledDataset, params: &SvcParams) -> Result<(LinearSvc, Convergence), TrainError> {
    if !(params.c > 0.0) || !params.c.is_finite() {
        return Err(TrainError::InvalidParameter(format!("c must be > 0, got {}", params.c)));
    }
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let dim = data.dim();
    let n = data.len();
    let lambda = 1.0 / (params.c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let bias_slot = dim;

    let mut w = ScaledVector::new(dim + 1);
    let mut avg_sum = vec![0.0; dim + 1];
    let mut best = (vec![0.0; dim], 0.0);
    let mut best_obj = hinge_objective(&best.0, best.1, data, lambda);
    let mut trace = vec![best_obj];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t: u64 = 0;
    let mut epochs = 0;
    let mut converged = false;
    let mut stalled = 0;

    for epoch in 1..=params.max_iter.max(1) {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let row = &data.rows()[i];
            let y = if row.label == 1 { 1.0 } else { -1.0 };
            let eta = 1.0 / (lambda * t as f64);
            let violated = y * w.dot(&row.features, bias_slot) < 1.0;
            w.shrink(1.0 - eta * lambda);
            if violated {
                w.add(&row.features, bias_slot, eta * y);
            }
            let norm = w.norm();
            if norm > radius {
                w.shrink(radius / norm);
            }
        }
        epochs = epoch;
        let current = w.materialize();
        for (acc, v) in avg_sum.iter_mut().zip(&current) {
            *acc += v;
        }
        let inv = 1.0 / epoch as f64;
        let avg: Vec<f64> = avg_sum.iter().map(|v| v * inv).collect();
        let previous = best_obj;
        for cand in [avg, current] {
            let obj = hinge_objective(&cand[..dim], cand[dim], data, lambda);
            if obj < best_obj {
                best_obj = obj;
                best = (cand[..dim].to_vec(), cand[dim]);
            }
        }
        trace.push(best_obj);
        if previous - best_obj < params.tol * previous.abs() {
            stalled += 1;
            if stalled >= PATIENCE {
                converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
    }

    Ok((
        LinearSvc {
            weights: best.0,
            bias: best.1,
        },
        Convergence {
            iterations: epochs,
            converged,
            final_objective: best_obj,
            trace,
        },
    ))
}
