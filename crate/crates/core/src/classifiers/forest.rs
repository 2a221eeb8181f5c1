use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{build_tree, FeatureSampling};
use super::{DecisionTree, DtParams, Impurity, LabeledDataset, TrainError};
use crate::features::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub num_trees: usize,
    /// Fraction of features offered to each split; `None` means `sqrt(dim)` features.
    /// They are drawn from the features present in the node's rows.
    pub feature_fraction: Option<f64>,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            num_trees: 100,
            feature_fraction: None,
            max_depth: 16,
            min_leaf: 1,
            bootstrap: true,
            seed: 42,
        }
    }
}

impl RfParams {
    pub fn features_per_split(&self, dim: usize) -> usize {
        let k = match self.feature_fraction {
            Some(f) => (f * dim as f64).ceil() as usize,
            None => (dim as f64).sqrt().ceil() as usize,
        };
        k.clamp(1, dim.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub(crate) dim: usize,
    pub(crate) trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Fails when the list is empty or the trees disagree on dimension.
    pub fn from_trees(trees: Vec<DecisionTree>) -> Option<Self> {
        let dim = trees.first()?.dim();
        trees.iter().all(|t| t.dim() == dim).then_some(Self { dim, trees })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn tree_scores(&self, x: &SparseVector) -> Vec<f64> {
        self.trees.iter().map(|t| t.score(x)).collect()
    }

    /// Mean of the per-tree positive fractions.
    pub fn score(&self, x: &SparseVector) -> f64 {
        self.trees.iter().map(|t| t.score(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Bagged decision trees. Tree `i` draws from its own ChaCha stream, so a
/// forest is reproducible from `seed` alone.
pub fn train_rf(data: &LabeledDataset, params: &RfParams) -> Result<RandomForest, TrainError> {
    if params.num_trees < 1 {
        return Err(TrainError::InvalidParameter("num_trees must be >= 1".into()));
    }
    if params.max_depth < 1 {
        return Err(TrainError::InvalidParameter("max_depth must be >= 1".into()));
    }
    if let Some(f) = params.feature_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(TrainError::InvalidParameter(format!("feature_fraction must be in (0, 1], got {f}")));
        }
    }
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let n = data.len();
    let dim = data.dim();
    let per_split = params.features_per_split(dim);
    let dt = DtParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        impurity: Impurity::Gini,
    };
    let trees = (0..params.num_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let sampling = if per_split >= dim {
                FeatureSampling::All
            } else {
                FeatureSampling::Subset {
                    size: per_split,
                    rng: &mut rng,
                }
            };
            build_tree(data, rows, &dt, sampling)
        })
        .collect();
    Ok(RandomForest { dim, trees })
}
