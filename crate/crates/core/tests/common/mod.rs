#![allow(dead_code)]

use ideation_core::classifiers::{LabeledDataset, Model};

/// Two clusters on either side of x0 = x1.
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

pub fn train_accuracy(model: &Model, data: &LabeledDataset) -> f64 {
    let preds = model.predict_batch(data).unwrap();
    let hits = preds.iter().zip(data.rows()).filter(|(p, r)| p.label == r.label).count();
    hits as f64 / data.len() as f64
}
