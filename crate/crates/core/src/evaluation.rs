//! Confusion matrices, accuracy/precision/recall/F1, ROC-AUC and per-class term counts.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{LabeledDataset, Model, TrainError};
use crate::corpus::Label;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{preds} predictions but {gold} gold labels")]
    LengthMismatch { preds: usize, gold: usize },
    #[error("nothing to evaluate")]
    EmptyMatrix,
    #[error("AUC needs both classes in the gold labels")]
    SingleClass,
    #[error("score at position {0} is not finite")]
    NonFinite(usize),
    #[error("no documents of class {0}")]
    UnknownClass(Label),
    #[error(transparent)]
    Predict(#[from] TrainError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same counts with the negative class treated as positive.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

pub fn confusion(preds: &[u8], gold: &[u8]) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            gold: gold.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::EmptyMatrix);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &g) in preds.iter().zip(gold) {
        match (p != 0, g != 0) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// Precision/recall/F1 of the suicide class only.
    PositiveClass,
    /// Per-class scores averaged with class support as weights.
    #[default]
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub averaging: Averaging,
    /// Set when some ratio had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "ACC,PRE,REC,F1,AUC";

    /// Values as percentages with two decimals; missing AUC prints as `NA`.
    pub fn csv_row(&self) -> String {
        let pct = |v: f64| format!("{:.2}", v * 100.0);
        format!(
            "{},{},{},{},{}",
            pct(self.accuracy),
            pct(self.precision),
            pct(self.recall),
            pct(self.f1),
            self.auc.map(pct).unwrap_or_else(|| "NA".into())
        )
    }
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(precision, recall, f1)` for the positive class of `cm`.
fn class_scores(cm: &ConfusionMatrix, flag: &mut bool) -> (f64, f64, f64) {
    let p = ratio(cm.tp, cm.tp + cm.fp, flag);
    let r = ratio(cm.tp, cm.tp + cm.fn_, flag);
    let f1 = if p + r == 0.0 {
        *flag = true;
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f1)
}

pub fn metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<MetricsReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let mut flag = false;
    let accuracy = (cm.tp + cm.tn) as f64 / total as f64;
    let (precision, recall, f1) = match averaging {
        Averaging::PositiveClass => class_scores(cm, &mut flag),
        Averaging::Weighted => {
            let pos = class_scores(cm, &mut flag);
            let neg = class_scores(&cm.swapped(), &mut flag);
            let w_pos = (cm.tp + cm.fn_) as f64 / total as f64;
            let w_neg = (cm.tn + cm.fp) as f64 / total as f64;
            (
                w_pos * pos.0 + w_neg * neg.0,
                w_pos * pos.1 + w_neg * neg.1,
                w_pos * pos.2 + w_neg * neg.2,
            )
        }
    };
    Ok(MetricsReport {
        accuracy,
        precision,
        recall,
        f1,
        auc: None,
        averaging,
        zero_division: flag,
    })
}

fn check_scores(scores: &[f64], gold: &[u8]) -> Result<(u64, u64), EvalError> {
    if scores.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            preds: scores.len(),
            gold: gold.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    let pos = gold.iter().filter(|&&g| g != 0).count() as u64;
    let neg = gold.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score.
fn by_score_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Rank-statistic AUC: `(concordant pairs + ties / 2) / (positives * negatives)`.
pub fn roc_auc(scores: &[f64], gold: &[u8]) -> Result<f64, EvalError> {
    let (pos, neg) = check_scores(scores, gold)?;
    let order = by_score_desc(scores);
    // walk tie groups from the top; each negative beats nothing and loses to every positive seen above it
    let mut pos_above: u64 = 0;
    // doubled to keep the half-credit for ties exact in integers
    let mut twice_concordant: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if gold[order[i]] != 0 {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        twice_concordant += 2 * u128::from(gn) * u128::from(pos_above) + u128::from(gn) * u128::from(gp);
        pos_above += gp;
    }
    Ok(twice_concordant as f64 / (2.0 * pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Predict positive when `score >= threshold`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC vertices from `(0, 0)` to `(1, 1)`, one per distinct score.
pub fn roc_curve(scores: &[f64], gold: &[u8]) -> Result<Vec<RocPoint>, EvalError> {
    let (pos, neg) = check_scores(scores, gold)?;
    let order = by_score_desc(scores);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if gold[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC polyline.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

pub fn roc_curve_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{:.6},{:.6}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}

/// Most frequent terms among documents of `class`, ties broken alphabetically.
pub fn top_terms<'a, I, D>(docs: I, class: Label, k: usize) -> Result<Vec<(String, u64)>, EvalError>
where
    I: IntoIterator<Item = (&'a D, Label)>,
    D: AsRef<[String]> + ?Sized + 'a,
{
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut seen = false;
    for (tokens, label) in docs {
        if label != class {
            continue;
        }
        seen = true;
        for t in tokens.as_ref() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if !seen {
        return Err(EvalError::UnknownClass(class));
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub scores: Vec<f64>,
    pub gold: Vec<u8>,
}

/// Predicts every test row and scores the result. AUC is left empty when the
/// test set holds one class only.
pub fn evaluate_model(model: &Model, test: &LabeledDataset, averaging: Averaging) -> Result<Evaluation, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyMatrix);
    }
    let preds = model.predict_batch(test)?;
    let labels: Vec<u8> = preds.iter().map(|p| p.label).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let gold = test.labels();
    let cm = confusion(&labels, &gold)?;
    let mut m = metrics(&cm, averaging)?;
    m.auc = match roc_auc(&scores, &gold) {
        Ok(a) => Some(a),
        Err(EvalError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    Ok(Evaluation {
        confusion: cm,
        metrics: m,
        scores,
        gold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        // tp: 0,1,2  fp: 3  fn: 4  tn: 5..9
        let preds = vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        let gold = vec![1, 1, 1, 0, 1, 0, 0, 0, 0, 0];
        (preds, gold)
    }

    #[test]
    fn mixed_confusion_and_metrics() {
        let (p, g) = fixture();
        let cm = confusion(&p, &g).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix {
                tp: 3,
                fp: 1,
                fn_: 1,
                tn: 5
            }
        );
        let m = metrics(&cm, Averaging::PositiveClass).unwrap();
        assert_eq!(m.accuracy, 0.8);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.75);
        assert_eq!(m.f1, 0.75);
        assert!(!m.zero_division);
    }

    #[test]
    fn weighted_averaging_by_support() {
        let cm = ConfusionMatrix {
            tp: 3,
            fp: 1,
            fn_: 1,
            tn: 5,
        };
        // negative class: p = 5/6, r = 5/6; supports 4 (pos) and 6 (neg)
        let m = metrics(&cm, Averaging::Weighted).unwrap();
        let expected = 0.4 * 0.75 + 0.6 * (5.0 / 6.0);
        assert!((m.precision - expected).abs() < 1e-15);
        assert!((m.recall - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_division_flag() {
        let cm = ConfusionMatrix {
            tp: 0,
            fp: 0,
            fn_: 2,
            tn: 3,
        };
        let m = metrics(&cm, Averaging::PositiveClass).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!(m.zero_division);
        assert_eq!(metrics(&ConfusionMatrix::default(), Averaging::Weighted), Err(EvalError::EmptyMatrix));
    }

    #[test]
    fn small_auc_cases() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.2], &[1, 0, 1, 0]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.4; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(EvalError::SingleClass));
        assert_eq!(roc_auc(&[0.1, f64::NAN], &[1, 0]), Err(EvalError::NonFinite(1)));
    }

    #[test]
    fn curve_area_matches_auc() {
        let scores = [0.9, 0.8, 0.8, 0.3, 0.2, 0.2, 0.1];
        let gold = [1, 0, 1, 1, 0, 1, 0];
        let curve = roc_curve(&scores, &gold).unwrap();
        assert_eq!(curve.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
        assert!((trapezoid_area(&curve) - roc_auc(&scores, &gold).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn top_terms_rank_and_truncate() {
        let docs: Vec<(Vec<String>, Label)> = vec![
            (vec!["want".into(), "die".into(), "want".into()], Label::Suicide),
            (vec!["want".into(), "end".into()], Label::Suicide),
            (vec!["game".into()], Label::NonSuicide),
        ];
        let iter = || docs.iter().map(|(t, l)| (t, *l));
        let top = top_terms(iter(), Label::Suicide, 2).unwrap();
        assert_eq!(top, vec![("want".to_string(), 3), ("die".to_string(), 1)]);
        assert_eq!(top_terms(iter(), Label::Suicide, 99).unwrap().len(), 3);
        let only_pos = &docs[..2];
        assert_eq!(
            top_terms(only_pos.iter().map(|(t, l)| (t, *l)), Label::NonSuicide, 3),
            Err(EvalError::UnknownClass(Label::NonSuicide))
        );
    }
}
