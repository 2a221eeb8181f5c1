//! The six binary classifiers, their shared model type, and the
//! cross-validation / grid-search drivers.

mod forest;
mod logistic;
mod mlp;
mod naive_bayes;
mod svc;
mod tree;
pub mod tuning;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::SparseVector;

pub use forest::{train_rf, RandomForest, RfParams};
pub use logistic::{logistic_objective, train_lr, LogisticRegression, LrParams};
pub use mlp::{train_mlp, Mlp, MlpLayer, MlpParams};
pub use naive_bayes::{train_nb, NaiveBayes, NbParams};
pub use svc::{hinge_objective, train_linear_svc, LinearSvc, SvcParams};
pub use tree::{train_dt, DecisionTree, DtParams, Impurity, TreeNode};
pub use tuning::{cross_validate, fold_indices, grid_search, CvReport, FoldReport, GridPoint, GridSearchResult, ParamValue, TrainerConfig};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training data contains a single class")]
    DegenerateLabels,
    #[error("training data is empty")]
    EmptyDataset,
    #[error("row {row} has negative value at feature {index}")]
    NegativeFeature { row: usize, index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown parameter `{0}` for this model")]
    UnknownParameter(String),
    #[error("vector dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot run {k}-fold cross-validation on {n} rows")]
    TooFewRows { n: usize, k: usize },
    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(u8),
}

/// One training row. `label` is 1 for the positive (suicide) class.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseVector,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    rows: Vec<Example>,
    dim: usize,
}

impl LabeledDataset {
    pub fn new(dim: usize, rows: Vec<Example>) -> Result<Self, TrainError> {
        for row in &rows {
            if row.features.dim() != dim {
                return Err(TrainError::DimensionMismatch {
                    expected: dim,
                    got: row.features.dim(),
                });
            }
            if row.label > 1 {
                return Err(TrainError::InvalidLabel(row.label));
            }
        }
        Ok(Self { rows, dim })
    }

    pub fn from_dense(rows: &[(Vec<f64>, u8)]) -> Result<Self, TrainError> {
        let dim = rows.first().map(|r| r.0.len()).unwrap_or(0);
        Self::new(
            dim,
            rows.iter()
                .map(|(x, y)| Example {
                    features: SparseVector::from_dense(x),
                    label: *y,
                })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Example] {
        &self.rows
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.label == 1).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            dim: self.dim,
        }
    }

    /// Same rows with every label flipped.
    pub fn with_flipped_labels(&self) -> Self {
        Self {
            rows: self
                .rows
                .iter()
                .map(|r| Example {
                    features: r.features.clone(),
                    label: 1 - r.label,
                })
                .collect(),
            dim: self.dim,
        }
    }

    pub(crate) fn require_both_classes(&self) -> Result<(), TrainError> {
        if self.rows.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let pos = self.positives();
        if pos == 0 || pos == self.rows.len() {
            return Err(TrainError::DegenerateLabels);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Nb,
    Lr,
    LinearSvc,
    Dt,
    Rf,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Nb,
        ModelKind::Lr,
        ModelKind::LinearSvc,
        ModelKind::Dt,
        ModelKind::Rf,
        ModelKind::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Nb => "nb",
            ModelKind::Lr => "lr",
            ModelKind::LinearSvc => "linear-svc",
            ModelKind::Dt => "dt",
            ModelKind::Rf => "rf",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Nb => "NB",
            ModelKind::Lr => "LR",
            ModelKind::LinearSvc => "LinearSVC",
            ModelKind::Dt => "DT",
            ModelKind::Rf => "RF",
            ModelKind::Mlp => "MLP",
        }
    }

    /// Whether [`Prediction::score`] is a probability (threshold 0.5) rather
    /// than a signed margin (threshold 0).
    pub fn is_probabilistic(self) -> bool {
        !matches!(self, ModelKind::LinearSvc)
    }

    pub fn tag(self) -> u8 {
        match self {
            ModelKind::Nb => 1,
            ModelKind::Lr => 2,
            ModelKind::LinearSvc => 3,
            ModelKind::Dt => 4,
            ModelKind::Rf => 5,
            ModelKind::Mlp => 6,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        ModelKind::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_lowercase();
        match lower.as_str() {
            "svc" | "linearsvc" => return Ok(ModelKind::LinearSvc),
            _ => {}
        }
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| format!("unknown model `{s}` (expected nb, lr, linear-svc, dt, rf or mlp)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    pub score: f64,
}

/// Trained parameters of any of the six model kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    NaiveBayes(NaiveBayes),
    Logistic(LogisticRegression),
    LinearSvc(LinearSvc),
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    Mlp(Mlp),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::NaiveBayes(_) => ModelKind::Nb,
            Model::Logistic(_) => ModelKind::Lr,
            Model::LinearSvc(_) => ModelKind::LinearSvc,
            Model::DecisionTree(_) => ModelKind::Dt,
            Model::RandomForest(_) => ModelKind::Rf,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::NaiveBayes(m) => m.dim(),
            Model::Logistic(m) => m.dim(),
            Model::LinearSvc(m) => m.dim(),
            Model::DecisionTree(m) => m.dim(),
            Model::RandomForest(m) => m.dim(),
            Model::Mlp(m) => m.dim(),
        }
    }

    fn raw_score(&self, x: &SparseVector) -> f64 {
        match self {
            Model::NaiveBayes(m) => m.score(x),
            Model::Logistic(m) => m.score(x),
            Model::LinearSvc(m) => m.margin(x),
            Model::DecisionTree(m) => m.score(x),
            Model::RandomForest(m) => m.score(x),
            Model::Mlp(m) => m.score(x),
        }
    }

    pub fn predict(&self, x: &SparseVector) -> Result<Prediction, TrainError> {
        if x.dim() != self.dim() {
            return Err(TrainError::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        let score = self.raw_score(x);
        let threshold = if self.kind().is_probabilistic() { 0.5 } else { 0.0 };
        Ok(Prediction {
            label: u8::from(score >= threshold),
            score,
        })
    }

    pub fn predict_batch(&self, data: &LabeledDataset) -> Result<Vec<Prediction>, TrainError> {
        data.rows().iter().map(|r| self.predict(&r.features)).collect()
    }

    pub fn predict_vectors(&self, xs: &[SparseVector]) -> Result<Vec<Prediction>, TrainError> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

/// Bookkeeping recorded alongside trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub kind: ModelKind,
    pub hyperparameters: serde_json::Value,
    pub seed: u64,
    pub trained_at_ms: u64,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub final_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub model: Model,
    pub meta: TrainingMeta,
}

impl ModelArtifact {
    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn predict(&self, x: &SparseVector) -> Result<Prediction, TrainError> {
        self.model.predict(x)
    }

    pub fn predict_batch(&self, data: &LabeledDataset) -> Result<Vec<Prediction>, TrainError> {
        self.model.predict_batch(data)
    }
}

/// Progress summary reported by iterative trainers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Convergence {
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    /// Objective value per checkpoint (iteration, epoch or averaged iterate).
    pub trace: Vec<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two clusters separated by the line x0 = x1 with a wide margin.
    pub fn separable() -> LabeledDataset {
        let mut rows = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.3;
            rows.push((vec![3.0 + t, 0.5 + 0.1 * t], 1));
            rows.push((vec![0.5 + 0.1 * t, 3.0 + t], 0));
        }
        LabeledDataset::from_dense(&rows).unwrap()
    }

    pub fn xor() -> LabeledDataset {
        LabeledDataset::from_dense(&[
            (vec![0.0, 0.0], 0),
            (vec![0.0, 1.0], 1),
            (vec![1.0, 0.0], 1),
            (vec![1.0, 1.0], 0),
        ])
        .unwrap()
    }

    pub fn accuracy(model: &Model, data: &LabeledDataset) -> f64 {
        let preds = model.predict_batch(data).unwrap();
        let hits = preds
            .iter()
            .zip(data.rows())
            .filter(|(p, r)| p.label == r.label)
            .count();
        hits as f64 / data.len() as f64
    }
}
