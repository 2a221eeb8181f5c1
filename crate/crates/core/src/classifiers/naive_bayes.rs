use serde::{Deserialize, Serialize};

use super::{LabeledDataset, TrainError};
use crate::features::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    /// Additive (Lidstone) smoothing.
    pub alpha: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

/// Multinomial naive Bayes over nonnegative term weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    pub(crate) log_prior: [f64; 2],
    /// `log_likelihood[c][t]` = log P(term t | class c).
    pub(crate) log_likelihood: [Vec<f64>; 2],
}

impl NaiveBayes {
    pub fn dim(&self) -> usize {
        self.log_likelihood[0].len()
    }

    pub fn log_prior(&self) -> [f64; 2] {
        self.log_prior
    }

    pub fn log_likelihood(&self, class: usize) -> &[f64] {
        &self.log_likelihood[class]
    }

    /// Unnormalized log posterior per class.
    pub fn log_joint(&self, x: &SparseVector) -> [f64; 2] {
        let mut out = self.log_prior;
        for (c, slot) in out.iter_mut().enumerate() {
            for (i, v) in x.iter() {
                *slot += v * self.log_likelihood[c][i];
            }
        }
        out
    }

    /// Class posteriors `[P(non-suicide | x), P(suicide | x)]`.
    pub fn posteriors(&self, x: &SparseVector) -> [f64; 2] {
        let mut joint = self.log_joint(x);
        if !joint.iter().any(|v| v.is_finite()) {
            // every class assigns zero mass (alpha = 0 with unseen terms): fall back to priors
            joint = self.log_prior;
        }
        let max = joint[0].max(joint[1]);
        let e0 = (joint[0] - max).exp();
        let e1 = (joint[1] - max).exp();
        let z = e0 + e1;
        [e0 / z, e1 / z]
    }

    pub fn score(&self, x: &SparseVector) -> f64 {
        self.posteriors(x)[1]
    }
}

pub fn train_nb(data: &LabeledDataset, params: &NbParams) -> Result<NaiveBayes, TrainError> {
    if !(params.alpha >= 0.0) || !params.alpha.is_finite() {
        return Err(TrainError::InvalidParameter(format!("alpha must be >= 0, got {}", params.alpha)));
    }
    data.require_both_classes()?;
    let dim = data.dim();
    let mut counts = [vec![0.0; dim], vec![0.0; dim]];
    let mut class_docs = [0usize; 2];
    for (row_idx, row) in data.rows().iter().enumerate() {
        let c = row.label as usize;
        class_docs[c] += 1;
        for (i, v) in row.features.iter() {
            if v < 0.0 {
                return Err(TrainError::NegativeFeature { row: row_idx, index: i });
            }
            counts[c][i] += v;
        }
    }
    let n = data.len() as f64;
    let log_prior = [(class_docs[0] as f64 / n).ln(), (class_docs[1] as f64 / n).ln()];
    let log_likelihood = counts.map(|class_counts| {
        let total: f64 = class_counts.iter().sum();
        let denom = (total + params.alpha * dim as f64).ln();
        class_counts
            .iter()
            .map(|&c| (c + params.alpha).ln() - denom)
            .collect()
    });
    Ok(NaiveBayes {
        log_prior,
        log_likelihood,
    })
}
