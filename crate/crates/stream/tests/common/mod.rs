#![allow(dead_code)]

use std::path::Path;

use ideation_broker::Broker;
use ideation_core::classifiers::{ModelKind, TrainerConfig};
use ideation_core::features::FeatureCombo;
use ideation_core::preprocess::PreprocessConfig;
use ideation_core::store;
use ideation_core::synth::{synth_corpus, SynthSpec};
use ideation_core::workflow::{run_training, TrainRequest};
use ideation_stream::*;

/// Trains a small LR pipeline on synthetic posts and saves it under `dir`.
pub fn trained_classifier(dir: &Path) -> Classifier {
    let cfg = PreprocessConfig::english();
    let corpus = synth_corpus(&SynthSpec {
        num_docs: 400,
        ..SynthSpec::default()
    });
    let out = run_training(
        corpus,
        &TrainRequest::new(FeatureCombo::UniCvIdf, TrainerConfig::default_for(ModelKind::Lr)),
        &cfg,
    )
    .unwrap();
    let path = dir.join("model.isp");
    store::save(&out.stored, &path).unwrap();
    Classifier::from_file(&path, cfg.clone()).unwrap()
}

pub fn fast_config() -> StreamConfig {
    StreamConfig {
        trigger_interval: std::time::Duration::from_millis(10),
        stop_when_idle: Some(std::time::Duration::from_millis(150)),
        filter: FilterConfig::off(),
        ..StreamConfig::default()
    }
}

pub fn produce_lines(broker: &Broker, topic: &str, lines: &[String]) {
    for l in lines {
        broker.produce(topic, None, l.as_bytes()).unwrap();
    }
}

pub fn output_events(broker: &Broker, topic: &str) -> Vec<PredictionEvent> {
    let mut out = Vec::new();
    for (p, &end) in broker.end_offsets(topic).unwrap().iter().enumerate() {
        for r in broker.read(topic, p as u32, 0, end as usize).unwrap() {
            out.push(PredictionEvent::from_json(&r.payload).unwrap());
        }
    }
    out
}
