//! The batch phase end to end: clean, split, preprocess, fit features,
//! train (optionally grid-searched), evaluate on the held-out split.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::classifiers::{
    grid_search, CvReport, Example, GridSearchResult, LabeledDataset, ParamValue, TrainError, TrainerConfig,
};
use crate::corpus::{dedupe_and_clean, split, CleanupReport, Corpus, CorpusError, Label, SplitSpec};
use crate::evaluation::{evaluate_model, Averaging, EvalError, Evaluation};
use crate::features::{FeatureCombo, FeatureError, FeatureOptions, FeaturePipeline};
use crate::preprocess::{preprocess, PreprocessConfig, TokenSeq};
use crate::store::StoredPipeline;

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Preprocessed documents with their labels; unlabeled documents are skipped.
pub fn preprocess_labeled(corpus: &Corpus, cfg: &PreprocessConfig) -> (Vec<TokenSeq>, Vec<Label>) {
    corpus
        .documents
        .iter()
        .filter_map(|d| d.label.map(|l| (preprocess(&d.text, &d.id, cfg), l)))
        .unzip()
}

pub fn to_dataset(pipeline: &FeaturePipeline, docs: &[TokenSeq], labels: &[Label]) -> LabeledDataset {
    let rows = docs
        .iter()
        .zip(labels)
        .map(|(d, l)| Example {
            features: pipeline.transform(&d.tokens),
            label: l.as_u8(),
        })
        .collect();
    LabeledDataset::new(pipeline.dim(), rows).expect("pipeline output matches its own dimension")
}

#[derive(Debug, Clone)]
pub struct TrainRequest {
    pub combo: FeatureCombo,
    pub features: FeatureOptions,
    pub trainer: TrainerConfig,
    pub split: SplitSpec,
    /// When set, the trainer is picked by k-fold grid search on the training split.
    pub grid: Option<BTreeMap<String, Vec<ParamValue>>>,
    pub folds: usize,
    /// Also report k-fold CV of the final config on the training split.
    pub cross_validate: bool,
    pub averaging: Averaging,
}

impl TrainRequest {
    pub fn new(combo: FeatureCombo, trainer: TrainerConfig) -> Self {
        Self {
            combo,
            features: FeatureOptions::default(),
            trainer,
            split: SplitSpec::default(),
            grid: None,
            folds: crate::classifiers::tuning::DEFAULT_FOLDS,
            cross_validate: false,
            averaging: Averaging::Weighted,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub stored: StoredPipeline,
    pub evaluation: Evaluation,
    pub cleanup: CleanupReport,
    pub train_size: usize,
    pub test_size: usize,
    pub grid: Option<GridSearchResult>,
    pub cv: Option<CvReport>,
    pub trainer: TrainerConfig,
}

pub fn run_training(corpus: Corpus, req: &TrainRequest, cfg: &PreprocessConfig) -> Result<TrainOutcome, WorkflowError> {
    let (clean, cleanup) = dedupe_and_clean(corpus);
    if clean.documents.is_empty() {
        return Err(CorpusError::EmptyCorpus.into());
    }
    let (train_corpus, test_corpus) = split(&clean, req.split)?;
    let (train_docs, train_labels) = preprocess_labeled(&train_corpus, cfg);
    let (test_docs, test_labels) = preprocess_labeled(&test_corpus, cfg);
    let token_lists: Vec<&[String]> = train_docs.iter().map(|d| d.tokens.as_slice()).collect();
    let pipeline = FeaturePipeline::fit(&token_lists, req.combo, &req.features)?;
    let train = to_dataset(&pipeline, &train_docs, &train_labels);
    let test = to_dataset(&pipeline, &test_docs, &test_labels);

    let (trainer, grid) = match &req.grid {
        Some(values) => {
            let result = grid_search(&req.trainer, values, &train, req.folds)?;
            (result.best().0.config.clone(), Some(result))
        }
        None => (req.trainer.clone(), None),
    };
    let cv = if req.cross_validate && grid.is_none() {
        Some(crate::classifiers::cross_validate(&trainer, &train, req.folds)?)
    } else {
        grid.as_ref().map(|g| g.best().1.clone())
    };
    let artifact = trainer.train(&train)?;
    let evaluation = evaluate_model(&artifact.model, &test, req.averaging)?;
    let stored = StoredPipeline::new(pipeline, artifact, cfg).with_metrics(evaluation.metrics);
    Ok(TrainOutcome {
        stored,
        evaluation,
        cleanup,
        train_size: train.len(),
        test_size: test.len(),
        grid,
        cv,
        trainer,
    })
}

/// Offline prediction for raw text with a stored pipeline, exactly as the stream engine does it.
pub fn predict_text(
    stored: &StoredPipeline,
    text: &str,
    cfg: &PreprocessConfig,
) -> Result<crate::classifiers::Prediction, TrainError> {
    let tokens = preprocess(text, "", cfg);
    stored.artifact.predict(&stored.pipeline.transform(&tokens.tokens))
}
