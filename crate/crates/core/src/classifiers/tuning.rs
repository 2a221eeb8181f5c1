//! Trainer configurations, k-fold cross-validation and grid search.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    train_dt, train_linear_svc, train_lr, train_mlp, train_nb, train_rf, Convergence, DtParams, LabeledDataset,
    LrParams, MlpParams, Model, ModelArtifact, ModelKind, NbParams, RfParams, SvcParams, TrainError, TrainingMeta,
};
use crate::clock;
use crate::evaluation::{confusion, metrics, Averaging};

pub const DEFAULT_FOLDS: usize = 10;

/// One hyperparameter value in a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Num(f64),
    Widths(Vec<usize>),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Num(v) => write!(f, "{v}"),
            ParamValue::Widths(w) => {
                let parts: Vec<String> = w.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", parts.join(","))
            }
        }
    }
}

impl ParamValue {
    /// Parses `0.1`, `64` or a width list such as `[32,64]` / `32x64`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let t = s.trim();
        if let Ok(v) = t.parse::<f64>() {
            return Ok(ParamValue::Num(v));
        }
        let inner = t.trim_start_matches('[').trim_end_matches(']');
        inner
            .split([',', 'x'])
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(ParamValue::Widths)
            .map_err(|_| format!("cannot parse parameter value `{s}`"))
    }

    fn as_f64(&self, name: &str) -> Result<f64, TrainError> {
        match self {
            ParamValue::Num(v) => Ok(*v),
            ParamValue::Widths(_) => Err(TrainError::InvalidParameter(format!("`{name}` expects a number"))),
        }
    }

    fn as_usize(&self, name: &str) -> Result<usize, TrainError> {
        let v = self.as_f64(name)?;
        if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
            return Err(TrainError::InvalidParameter(format!("`{name}` expects a nonnegative integer, got {v}")));
        }
        Ok(v as usize)
    }
}

/// Model kind plus every hyperparameter its trainer needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum TrainerConfig {
    Nb(NbParams),
    Lr(LrParams),
    LinearSvc(SvcParams),
    Dt(DtParams),
    Rf(RfParams),
    Mlp(MlpParams),
}

impl TrainerConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Nb => TrainerConfig::Nb(NbParams::default()),
            ModelKind::Lr => TrainerConfig::Lr(LrParams::default()),
            ModelKind::LinearSvc => TrainerConfig::LinearSvc(SvcParams::default()),
            ModelKind::Dt => TrainerConfig::Dt(DtParams::default()),
            ModelKind::Rf => TrainerConfig::Rf(RfParams::default()),
            ModelKind::Mlp => TrainerConfig::Mlp(MlpParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TrainerConfig::Nb(_) => ModelKind::Nb,
            TrainerConfig::Lr(_) => ModelKind::Lr,
            TrainerConfig::LinearSvc(_) => ModelKind::LinearSvc,
            TrainerConfig::Dt(_) => ModelKind::Dt,
            TrainerConfig::Rf(_) => ModelKind::Rf,
            TrainerConfig::Mlp(_) => ModelKind::Mlp,
        }
    }

    /// Shipped search grid for `kind`.
    pub fn default_grid(kind: ModelKind) -> BTreeMap<String, Vec<ParamValue>> {
        let nums = |name: &str, vs: &[f64]| BTreeMap::from([(name.to_string(), vs.iter().map(|&v| ParamValue::Num(v)).collect())]);
        match kind {
            ModelKind::Nb => nums("alpha", &[0.5, 1.0]),
            ModelKind::Lr => nums("l2", &[0.0, 0.01, 0.1]),
            ModelKind::LinearSvc => nums("c", &[0.1, 1.0, 10.0]),
            ModelKind::Dt => nums("max_depth", &[8.0, 16.0, 24.0]),
            ModelKind::Rf => nums("num_trees", &[50.0, 100.0]),
            ModelKind::Mlp => BTreeMap::from([(
                "hidden".to_string(),
                vec![ParamValue::Widths(vec![32]), ParamValue::Widths(vec![64])],
            )]),
        }
    }

    /// Seed used by the trainer; NB and DT are deterministic and have none.
    pub fn seed(&self) -> u64 {
        match self {
            TrainerConfig::Nb(_) | TrainerConfig::Dt(_) => 0,
            TrainerConfig::Lr(p) => p.seed,
            TrainerConfig::LinearSvc(p) => p.seed,
            TrainerConfig::Rf(p) => p.seed,
            TrainerConfig::Mlp(p) => p.seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            TrainerConfig::Nb(_) | TrainerConfig::Dt(_) => {}
            TrainerConfig::Lr(p) => p.seed = seed,
            TrainerConfig::LinearSvc(p) => p.seed = seed,
            TrainerConfig::Rf(p) => p.seed = seed,
            TrainerConfig::Mlp(p) => p.seed = seed,
        }
        self
    }

    /// Sets one hyperparameter by name. Booleans take 0 or 1.
    pub fn set_param(&mut self, name: &str, value: &ParamValue) -> Result<(), TrainError> {
        let unknown = || TrainError::UnknownParameter(name.to_string());
        match self {
            TrainerConfig::Nb(p) => match name {
                "alpha" => p.alpha = value.as_f64(name)?,
                _ => return Err(unknown()),
            },
            TrainerConfig::Lr(p) => match name {
                "l2" => p.l2 = value.as_f64(name)?,
                "max_iter" => p.max_iter = value.as_usize(name)?,
                "tol" => p.tol = value.as_f64(name)?,
                "seed" => p.seed = value.as_usize(name)? as u64,
                _ => return Err(unknown()),
            },
            TrainerConfig::LinearSvc(p) => match name {
                "c" => p.c = value.as_f64(name)?,
                "max_iter" => p.max_iter = value.as_usize(name)?,
                "tol" => p.tol = value.as_f64(name)?,
                "seed" => p.seed = value.as_usize(name)? as u64,
                _ => return Err(unknown()),
            },
            TrainerConfig::Dt(p) => match name {
                "max_depth" | "depth" => p.max_depth = value.as_usize(name)?,
                "min_leaf" => p.min_leaf = value.as_usize(name)?,
                _ => return Err(unknown()),
            },
            TrainerConfig::Rf(p) => match name {
                "num_trees" | "trees" => p.num_trees = value.as_usize(name)?,
                "feature_fraction" => p.feature_fraction = Some(value.as_f64(name)?),
                "max_depth" | "depth" => p.max_depth = value.as_usize(name)?,
                "min_leaf" => p.min_leaf = value.as_usize(name)?,
                "bootstrap" => p.bootstrap = value.as_f64(name)? != 0.0,
                "seed" => p.seed = value.as_usize(name)? as u64,
                _ => return Err(unknown()),
            },
            TrainerConfig::Mlp(p) => match name {
                "hidden" => {
                    p.hidden = match value {
                        ParamValue::Widths(w) => w.clone(),
                        ParamValue::Num(_) => vec![value.as_usize(name)?],
                    }
                }
                "learning_rate" | "lr" => p.learning_rate = value.as_f64(name)?,
                "epochs" => p.epochs = value.as_usize(name)?,
                "batch_size" => p.batch_size = value.as_usize(name)?,
                "seed" => p.seed = value.as_usize(name)? as u64,
                _ => return Err(unknown()),
            },
        }
        Ok(())
    }

    pub fn hyperparameters(&self) -> serde_json::Value {
        let v = match self {
            TrainerConfig::Nb(p) => serde_json::to_value(p),
            TrainerConfig::Lr(p) => serde_json::to_value(p),
            TrainerConfig::LinearSvc(p) => serde_json::to_value(p),
            TrainerConfig::Dt(p) => serde_json::to_value(p),
            TrainerConfig::Rf(p) => serde_json::to_value(p),
            TrainerConfig::Mlp(p) => serde_json::to_value(p),
        };
        v.expect("parameter structs serialize")
    }

    pub fn train(&self, data: &LabeledDataset) -> Result<ModelArtifact, TrainError> {
        let (model, conv): (Model, Option<Convergence>) = match self {
            TrainerConfig::Nb(p) => (Model::NaiveBayes(train_nb(data, p)?), None),
            TrainerConfig::Lr(p) => {
                let (m, c) = train_lr(data, p)?;
                (Model::Logistic(m), Some(c))
            }
            TrainerConfig::LinearSvc(p) => {
                let (m, c) = train_linear_svc(data, p)?;
                (Model::LinearSvc(m), Some(c))
            }
            TrainerConfig::Dt(p) => (Model::DecisionTree(train_dt(data, p)?), None),
            TrainerConfig::Rf(p) => (Model::RandomForest(train_rf(data, p)?), None),
            TrainerConfig::Mlp(p) => {
                let (m, c) = train_mlp(data, p)?;
                (Model::Mlp(m), Some(c))
            }
        };
        Ok(ModelArtifact {
            model,
            meta: TrainingMeta {
                kind: self.kind(),
                hyperparameters: self.hyperparameters(),
                seed: self.seed(),
                trained_at_ms: clock::now_ms(),
                iterations: conv.as_ref().map(|c| c.iterations),
                converged: conv.as_ref().map(|c| c.converged),
                final_objective: conv.as_ref().map(|c| c.final_objective),
            },
        })
    }
}

/// Seed for run `index` of a batch started from `base` (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded shuffle of `0..n` cut into `k` contiguous folds; the first
/// `n % k` folds hold one extra row.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, TrainError> {
    if k < 2 || k > n {
        return Err(TrainError::TooFewRows { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[at..at + size].to_vec());
        at += size;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub kind: ModelKind,
    pub hyperparameters: serde_json::Value,
    pub k: usize,
    pub folds: Vec<FoldReport>,
    pub mean_accuracy: f64,
    /// Sample standard deviation across folds.
    pub std_accuracy: f64,
}

impl CvReport {
    pub const CSV_HEADER: &'static str = "fold,train_size,test_size,accuracy,precision,recall,f1";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for f in &self.folds {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                f.fold, f.train_size, f.test_size, f.accuracy, f.precision, f.recall, f.f1
            ));
        }
        out.push_str(&format!("mean,,,{:.6},,,\n", self.mean_accuracy));
        out.push_str(&format!("stdev,,,{:.6},,,\n", self.std_accuracy));
        out
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// k-fold cross-validation. Fold `i` trains with seed `derive_seed(config seed, i)`,
/// so results do not depend on how folds are scheduled across threads.
pub fn cross_validate(config: &TrainerConfig, data: &LabeledDataset, k: usize) -> Result<CvReport, TrainError> {
    let folds = fold_indices(data.len(), k, config.seed())?;
    let reports: Vec<FoldReport> = folds
        .par_iter()
        .enumerate()
        .map(|(i, test_idx)| {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            let train = data.subset(&train_idx);
            let test = data.subset(test_idx);
            let run = config.clone().with_seed(derive_seed(config.seed(), i as u64));
            let artifact = run.train(&train)?;
            let preds: Vec<u8> = artifact.predict_batch(&test)?.iter().map(|p| p.label).collect();
            let cm = confusion(&preds, &test.labels()).expect("fold is non-empty");
            let m = metrics(&cm, Averaging::Weighted).expect("fold is non-empty");
            Ok(FoldReport {
                fold: i,
                train_size: train.len(),
                test_size: test.len(),
                accuracy: m.accuracy,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
            })
        })
        .collect::<Result<_, TrainError>>()?;
    let accs: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    Ok(CvReport {
        kind: config.kind(),
        hyperparameters: config.hyperparameters(),
        k,
        folds: reports,
        mean_accuracy,
        std_accuracy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub params: BTreeMap<String, ParamValue>,
    pub config: TrainerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_index: usize,
    pub runs: Vec<(GridPoint, CvReport)>,
}

impl GridSearchResult {
    pub fn best(&self) -> &(GridPoint, CvReport) {
        &self.runs[self.best_index]
    }

    /// One row per grid point: the parameters, then mean and stdev accuracy.
    pub fn to_csv(&self) -> String {
        let names: Vec<&String> = self.runs.first().map(|r| r.0.params.keys().collect()).unwrap_or_default();
        let mut out = String::new();
        for n in &names {
            out.push_str(n);
            out.push(',');
        }
        out.push_str("mean_accuracy,std_accuracy,best\n");
        for (i, (point, report)) in self.runs.iter().enumerate() {
            for v in point.params.values() {
                let s = v.to_string();
                if s.contains(',') {
                    out.push_str(&format!("\"{s}\","));
                } else {
                    out.push_str(&s);
                    out.push(',');
                }
            }
            out.push_str(&format!(
                "{:.6},{:.6},{}\n",
                report.mean_accuracy,
                report.std_accuracy,
                u8::from(i == self.best_index)
            ));
        }
        out
    }
}

/// Exhaustive search over the Cartesian product of `grid`.
///
/// Points are visited with parameters ordered by name and the last name
/// varying fastest. The first point with the highest mean CV accuracy wins.
pub fn grid_search(
    base: &TrainerConfig,
    grid: &BTreeMap<String, Vec<ParamValue>>,
    data: &LabeledDataset,
    k: usize,
) -> Result<GridSearchResult, TrainError> {
    if grid.is_empty() || grid.values().any(|v| v.is_empty()) {
        return Err(TrainError::InvalidParameter("grid must have at least one value per parameter".into()));
    }
    let names: Vec<&String> = grid.keys().collect();
    let lists: Vec<&Vec<ParamValue>> = grid.values().collect();
    let total: usize = lists.iter().map(|l| l.len()).product();
    let mut points = Vec::with_capacity(total);
    for idx in 0..total {
        let mut config = base.clone();
        let mut params = BTreeMap::new();
        let mut rest = idx;
        let mut picks = vec![0usize; lists.len()];
        for (slot, list) in picks.iter_mut().zip(&lists).rev() {
            *slot = rest % list.len();
            rest /= list.len();
        }
        for ((name, list), &d) in names.iter().zip(&lists).zip(&picks) {
            config.set_param(name, &list[d])?;
            params.insert((*name).clone(), list[d].clone());
        }
        points.push(GridPoint { params, config });
    }

    let mut runs: Vec<(GridPoint, CvReport)> = Vec::with_capacity(points.len());
    let mut best_index = 0;
    for (i, point) in points.into_iter().enumerate() {
        let report = cross_validate(&point.config, data, k)?;
        if i > 0 && report.mean_accuracy > runs[best_index].1.mean_accuracy {
            best_index = i;
        }
        runs.push((point, report));
    }
    Ok(GridSearchResult { best_index, runs })
}
