use std::sync::atomic::AtomicBool;
use std::time::Duration;

use ideation_broker::Broker;
use ideation_core::classifiers::{ModelKind, TrainerConfig};
use ideation_core::features::FeatureCombo;
use ideation_core::preprocess::PreprocessConfig;
use ideation_core::store::{self, digest_bytes};
use ideation_core::synth::{engineered_lines, synth_corpus, SynthSpec};
use ideation_core::workflow::{predict_text, run_training, TrainRequest};
use ideation_stream::aggregate::format_pct;
use ideation_stream::*;

use crate::{ensure, Check};

pub fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = PreprocessConfig::english();
    let corpus = synth_corpus(&SynthSpec {
        num_docs: 600,
        ..SynthSpec::default()
    });
    let trained = run_training(
        corpus,
        &TrainRequest::new(FeatureCombo::UniCvIdf, TrainerConfig::default_for(ModelKind::Lr)),
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    let model_path = dir.path().join("model.isp");
    store::save(&trained.stored, &model_path).map_err(|e| e.to_string())?;
    let offline = store::load(&model_path).map_err(|e| e.to_string())?.stored;
    let classifier = Classifier::from_file(&model_path, cfg.clone()).map_err(|e| e.to_string())?;

    let lines = engineered_lines(|t| classifier.classify(t).map(|p| p.label).unwrap_or(2), 71, 764, 11)?;
    let fixture = dir.path().join("posts.txt");
    std::fs::write(&fixture, lines.join("\n") + "\n").map_err(|e| e.to_string())?;

    let broker = Broker::open(dir.path().join("log")).map_err(|e| e.to_string())?;
    let stream_cfg = StreamConfig {
        trigger_interval: Duration::from_millis(20),
        stop_when_idle: Some(Duration::from_millis(300)),
        filter: FilterConfig::off(),
        ..StreamConfig::default()
    };
    ensure_topics(&broker, &stream_cfg).map_err(|e| e.to_string())?;
    let replayed = replay_file(
        &broker,
        &stream_cfg.input_topic,
        &fixture,
        &ReplayOptions::default(),
        &AtomicBool::new(false),
    )
    .map_err(|e| e.to_string())?;
    ensure!(replayed.produced == 764, "replay produced {}", replayed.produced);

    let report = run_stream(&broker, &stream_cfg, &classifier, &StreamControl::new()).map_err(|e| e.to_string())?;
    ensure!(report.events == 764 && report.dead_letters == 0, "stream report {report:?}");

    let ends = broker.end_offsets(&stream_cfg.output_topic).map_err(|e| e.to_string())?;
    let mut events = Vec::new();
    for (p, &end) in ends.iter().enumerate() {
        for r in broker.read(&stream_cfg.output_topic, p as u32, 0, end as usize).map_err(|e| e.to_string())? {
            events.push(PredictionEvent::from_json(&r.payload).map_err(|e| e.to_string())?);
        }
    }
    ensure!(events.len() == 764, "{} prediction events", events.len());
    events.sort_by_key(|e| e.source_offset);
    for (i, e) in events.iter().enumerate() {
        ensure!(e.source_offset == i as u64, "event {i} has source offset {}", e.source_offset);
        let want = predict_text(&offline, &lines[i], &cfg).map_err(|e| e.to_string())?;
        ensure!(
            e.label == want.label && e.score.to_bits() == want.score.to_bits(),
            "line {i}: stream {}/{} offline {}/{}",
            e.label,
            e.score,
            want.label,
            want.score
        );
        ensure!(e.text_digest == digest_bytes(lines[i].as_bytes()), "line {i}: text digest differs");
    }

    let snap = aggregate(
        &broker,
        &stream_cfg.output_topic,
        &AggregateOptions::default(),
        None,
        &StreamControl::new(),
    )
    .map_err(|e| e.to_string())?;
    let (s, n) = (snap.suicide_pct.unwrap_or(f64::NAN), snap.non_suicide_pct.unwrap_or(f64::NAN));
    ensure!(snap.total == 764 && (s + n - 100.0).abs() < 1e-9, "snapshot {snap:?}");
    let shown = (format_pct(snap.suicide_pct), format_pct(snap.non_suicide_pct));
    ensure!(shown == ("9.29".into(), "90.71".into()), "aggregate shows {shown:?}");
    Ok(format!("764 events bit-identical to offline predict; {}% / {}%", shown.0, shown.1))
}
