use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, TrainError};
use crate::features::SparseVector;

/// Most candidate thresholds evaluated per feature per node.
pub(crate) const MAX_THRESHOLDS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Impurity {
    Gini,
    Entropy,
}

impl Impurity {
    fn of(self, neg: f64, pos: f64) -> f64 {
        let n = neg + pos;
        if n <= 0.0 {
            return 0.0;
        }
        let (p0, p1) = (neg / n, pos / n);
        match self {
            Impurity::Gini => 1.0 - p0 * p0 - p1 * p1,
            Impurity::Entropy => {
                let h = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
                h(p0) + h(p1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub impurity: Impurity,
}

impl Default for DtParams {
    fn default() -> Self {
        Self {
            max_depth: 16,
            min_leaf: 1,
            impurity: Impurity::Gini,
        }
    }
}

/// Flat tree node; children are indices into [`DecisionTree::nodes`].
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        /// Training rows reaching this leaf, `[negatives, positives]`.
        counts: [u64; 2],
    },
    Split {
        feature: u32,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub(crate) dim: usize,
    pub(crate) nodes: Vec<TreeNode>,
}

impl DecisionTree {
    /// Builds a tree from raw nodes, checking child indices and feature bounds.
    pub fn from_nodes(dim: usize, nodes: Vec<TreeNode>) -> Option<Self> {
        if nodes.is_empty() {
            return None;
        }
        let n = nodes.len() as u32;
        for (i, node) in nodes.iter().enumerate() {
            if let TreeNode::Split {
                feature, left, right, ..
            } = node
            {
                // children always come after their parent, so traversal terminates
                if *feature as usize >= dim || *left >= n || *right >= n || *left as usize <= i || *right as usize <= i {
                    return None;
                }
            }
        }
        Some(Self { dim, nodes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn num_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Split { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_counts(&self, x: &SparseVector) -> [u64; 2] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { counts } => return *counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x.get(*feature as usize) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Positive fraction at the leaf `x` falls into.
    pub fn score(&self, x: &SparseVector) -> f64 {
        let [neg, pos] = self.leaf_counts(x);
        let n = neg + pos;
        if n == 0 {
            0.5
        } else {
            pos as f64 / n as f64
        }
    }
}

/// How many features each split may look at.
pub(crate) enum FeatureSampling<'a, R: Rng> {
    All,
    Subset { size: usize, rng: &'a mut R },
}

struct Candidate {
    gain: f64,
    feature: u32,
    threshold: f64,
}

pub(crate) fn build_tree<R: Rng>(
    data: &LabeledDataset,
    rows: Vec<usize>,
    params: &DtParams,
    mut sampling: FeatureSampling<'_, R>,
) -> DecisionTree {
    let mut nodes = vec![TreeNode::Leaf { counts: [0, 0] }];
    // (node slot, rows, depth)
    let mut stack = vec![(0usize, rows, 0usize)];
    while let Some((slot, rows, depth)) = stack.pop() {
        let mut counts = [0u64; 2];
        for &r in &rows {
            counts[data.rows()[r].label as usize] += 1;
        }
        nodes[slot] = TreeNode::Leaf { counts };
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= params.max_depth || rows.len() < 2 * params.min_leaf.max(1) {
            continue;
        }
        let allowed = match &mut sampling {
            FeatureSampling::All => None,
            FeatureSampling::Subset { size, rng } => {
                // columns that are zero throughout the node cannot split it, so they are not drawn
                let mut active: Vec<usize> = rows.iter().flat_map(|&r| data.rows()[r].features.iter().map(|(i, _)| i)).collect();
                active.sort_unstable();
                active.dedup();
                if active.len() > *size {
                    let mut picked: Vec<usize> = rand::seq::index::sample(*rng, active.len(), *size)
                        .into_iter()
                        .map(|k| active[k])
                        .collect();
                    picked.sort_unstable();
                    active = picked;
                }
                Some(active)
            }
        };
        let Some(best) = best_split(data, &rows, counts, params, allowed.as_deref()) else {
            continue;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| data.rows()[r].features.get(best.feature as usize) <= best.threshold);
        let left = nodes.len();
        nodes.push(TreeNode::Leaf { counts: [0, 0] });
        let right = nodes.len();
        nodes.push(TreeNode::Leaf { counts: [0, 0] });
        nodes[slot] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: left as u32,
            right: right as u32,
        };
        stack.push((right, right_rows, depth + 1));
        stack.push((left, left_rows, depth + 1));
    }
    DecisionTree { dim: data.dim(), nodes }
}

/// Evenly spaced picks from the sorted midpoints, at most [`MAX_THRESHOLDS`].
fn candidate_thresholds(values: &[f64]) -> Vec<f64> {
    let mids: Vec<f64> = values.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
    if mids.len() <= MAX_THRESHOLDS {
        return mids;
    }
    let mut out: Vec<f64> = (0..MAX_THRESHOLDS)
        .map(|k| mids[(k * (mids.len() - 1)) / (MAX_THRESHOLDS - 1)])
        .collect();
    out.dedup();
    out
}

fn best_split(
    data: &LabeledDataset,
    rows: &[usize],
    counts: [u64; 2],
    params: &DtParams,
    allowed: Option<&[usize]>,
) -> Option<Candidate> {
    // (feature, value, label) for every nonzero entry in the node
    let mut entries: Vec<(u32, f64, u8)> = Vec::new();
    for &r in rows {
        let ex = &data.rows()[r];
        for (i, v) in ex.features.iter() {
            if allowed.is_none_or(|a| a.binary_search(&i).is_ok()) {
                entries.push((i as u32, v, ex.label));
            }
        }
    }
    entries.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n = rows.len() as f64;
    let parent = params.impurity.of(counts[0] as f64, counts[1] as f64);
    let min_leaf = params.min_leaf.max(1) as u64;
    let total = counts[0] + counts[1];
    let mut best: Option<Candidate> = None;

    let mut start = 0;
    while start < entries.len() {
        let feature = entries[start].0;
        let mut end = start;
        while end < entries.len() && entries[end].0 == feature {
            end += 1;
        }
        let group = &entries[start..end];
        start = end;

        // merge in the implicit zeros and collapse to (value, [neg, pos]) runs
        let mut zeros = counts;
        for &(_, _, y) in group {
            zeros[y as usize] -= 1;
        }
        let mut runs: Vec<(f64, [u64; 2])> = Vec::new();
        let mut push = |v: f64, c: [u64; 2]| match runs.last_mut() {
            Some(last) if last.0 == v => {
                last.1[0] += c[0];
                last.1[1] += c[1];
            }
            _ => runs.push((v, c)),
        };
        let mut zeros_done = zeros == [0, 0];
        for &(_, v, y) in group {
            if !zeros_done && v > 0.0 {
                push(0.0, zeros);
                zeros_done = true;
            }
            let mut c = [0, 0];
            c[y as usize] = 1;
            push(v, c);
        }
        if !zeros_done {
            push(0.0, zeros);
        }
        if runs.len() < 2 {
            continue;
        }
        let values: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let thresholds = candidate_thresholds(&values);

        let mut left = [0u64; 2];
        let mut run = 0;
        for t in thresholds {
            while run < runs.len() && runs[run].0 <= t {
                left[0] += runs[run].1[0];
                left[1] += runs[run].1[1];
                run += 1;
            }
            let nl = left[0] + left[1];
            let nr = total - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right = [counts[0] - left[0], counts[1] - left[1]];
            let child = (nl as f64 / n) * params.impurity.of(left[0] as f64, left[1] as f64)
                + (nr as f64 / n) * params.impurity.of(right[0] as f64, right[1] as f64);
            let gain = parent - child;
            // strict improvement keeps the lower feature / lower threshold on ties
            if best.as_ref().is_none_or(|b| gain > b.gain + 1e-12) {
                best = Some(Candidate { gain, feature, threshold: t });
            }
        }
    }
    best.filter(|b| b.gain >= -1e-12)
}

/// Greedy CART-style tree over continuous features.
///
/// Splits with zero gain are still taken while a node is impure (XOR needs
/// one at the root).
pub fn train_dt(data: &LabeledDataset, params: &DtParams) -> Result<DecisionTree, TrainError> {
    if params.max_depth < 1 {
        return Err(TrainError::InvalidParameter("max_depth must be >= 1".into()));
    }
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let rows: Vec<usize> = (0..data.len()).collect();
    Ok(build_tree::<rand_chacha::ChaCha8Rng>(data, rows, params, FeatureSampling::All))
}
