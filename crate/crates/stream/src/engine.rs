//! Three stages joined by bounded queues:
//!
//! ```text
//! consume (micro-batches on a trigger) -> process (filter, classify) -> sink (produce, then commit)
//! ```
//!
//! Input offsets are committed only after the batch's outputs are acknowledged,
//! so a crash anywhere replays the batch: duplicates are possible, gaps are not.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use ideation_broker::{Broker, Consumer, Record, TopicPartitionOffset};
use ideation_core::classifiers::{Prediction, TrainError};
use ideation_core::corpus::Label;
use ideation_core::preprocess::PreprocessConfig;
use ideation_core::store::{self, StoredPipeline};
use ideation_core::workflow::predict_text;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Fault, StreamConfig};
use crate::error::{Result, StreamError};
use crate::event::{now_ms, DeadLetter, PredictionEvent};
use crate::filter::{StreamFilter, Verdict};

/// A loaded pipeline plus the digest stamped on every event.
pub struct Classifier {
    stored: StoredPipeline,
    model_digest: String,
    preprocess: PreprocessConfig,
}

impl Classifier {
    pub fn new(stored: StoredPipeline, model_digest: String, preprocess: PreprocessConfig) -> Self {
        if !stored.check_preprocess(&preprocess) {
            log::warn!("stopword or lemma lists differ from the ones the model was trained with");
        }
        Self {
            stored,
            model_digest,
            preprocess,
        }
    }

    pub fn from_file(path: &Path, preprocess: PreprocessConfig) -> Result<Self> {
        let loaded = store::load(path)?;
        Ok(Self::new(loaded.stored, loaded.digest, preprocess))
    }

    pub fn model_digest(&self) -> &str {
        &self.model_digest
    }

    pub fn stored(&self) -> &StoredPipeline {
        &self.stored
    }

    /// Same path as offline prediction, so results agree bit for bit.
    pub fn classify(&self, text: &str) -> Result<Prediction, TrainError> {
        predict_text(&self.stored, text, &self.preprocess)
    }
}

/// Cloneable stop switch; also what an interrupt handler flips.
#[derive(Debug, Clone, Default)]
pub struct StreamControl {
    stop: Arc<AtomicBool>,
}

impl StreamControl {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_flag(stop: Arc<AtomicBool>) -> Self {
        Self { stop }
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    pub fn flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LatencySummary {
    pub samples: usize,
    pub p50_ms: Option<i64>,
    pub p95_ms: Option<i64>,
    pub max_ms: Option<i64>,
}

impl LatencySummary {
    fn from_samples(mut v: Vec<i64>) -> Self {
        v.sort_unstable();
        let pick = |q: f64| (!v.is_empty()).then(|| v[((v.len() - 1) as f64 * q).round() as usize]);
        Self {
            samples: v.len(),
            p50_ms: pick(0.5),
            p95_ms: pick(0.95),
            max_ms: v.last().copied(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StreamReport {
    pub batches: u64,
    pub consumed: u64,
    pub events: u64,
    pub dead_letters: u64,
    pub dropped: BTreeMap<String, u64>,
    pub suicide: u64,
    pub non_suicide: u64,
    pub latency: LatencySummary,
    pub elapsed_secs: f64,
}

struct Batch {
    seq: u64,
    records: Vec<Record>,
}

enum Outcome {
    Event(Vec<u8>, u8),
    Dead(Vec<u8>),
    Dropped(&'static str),
}

struct Processed {
    seq: u64,
    partitions: Vec<u32>,
    timestamps: Vec<i64>,
    outcomes: Vec<Outcome>,
    commits: Vec<TopicPartitionOffset>,
}

fn sleep_until(deadline: Instant, stopped: impl Fn() -> bool) {
    while !stopped() {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        thread::sleep((deadline - now).min(Duration::from_millis(20)));
    }
}

fn caught_up(broker: &Broker, consumer: &mut Consumer, topic: &str) -> Result<bool> {
    let ends = broker.end_offsets(topic)?;
    for (t, p) in consumer.assignment()? {
        if consumer.position(&t, p).unwrap_or(0) < ends[p as usize] {
            return Ok(false);
        }
    }
    Ok(true)
}

fn consume_stage(
    broker: &Broker,
    mut consumer: Consumer,
    cfg: &StreamConfig,
    control: &StreamControl,
    halt: &AtomicBool,
    out: SyncSender<Batch>,
) -> Result<()> {
    let stopped = || control.is_stopped() || halt.load(Ordering::SeqCst);
    let mut next_tick = Instant::now();
    let mut last_input = Instant::now();
    let mut seq = 0;
    while !stopped() {
        let mut records = Vec::new();
        loop {
            let got = consumer.poll(cfg.micro_batch_max - records.len(), Duration::ZERO)?;
            if got.is_empty() {
                break;
            }
            records.extend(got);
            if records.len() >= cfg.micro_batch_max {
                break;
            }
        }
        let full = records.len() >= cfg.micro_batch_max;
        if records.is_empty() {
            if let Some(idle) = cfg.stop_when_idle {
                if last_input.elapsed() >= idle && caught_up(broker, &mut consumer, &cfg.input_topic)? {
                    log::info!("input idle for {idle:?}; stopping");
                    break;
                }
            }
        } else {
            last_input = Instant::now();
            if out.send(Batch { seq, records }).is_err() {
                break;
            }
            seq += 1;
        }
        // a full batch means a backlog: start the next one right away
        if !full {
            next_tick += cfg.trigger_interval;
            let now = Instant::now();
            if next_tick < now {
                next_tick = now;
            }
            sleep_until(next_tick, stopped);
        } else {
            next_tick = Instant::now();
        }
    }
    Ok(())
}

fn process_stage(
    cfg: &StreamConfig,
    classifier: &Classifier,
    input: Receiver<Batch>,
    out: SyncSender<Processed>,
) -> Result<()> {
    let mut filter = StreamFilter::new(cfg.filter.clone());
    for batch in input {
        let mut kept: Vec<(usize, String)> = Vec::new();
        let mut outcomes: Vec<Option<Outcome>> = Vec::with_capacity(batch.records.len());
        let mut commits: BTreeMap<u32, u64> = BTreeMap::new();
        for (i, r) in batch.records.iter().enumerate() {
            let next = commits.entry(r.partition).or_insert(0);
            *next = (*next).max(r.offset + 1);
            match std::str::from_utf8(&r.payload) {
                Err(e) => outcomes.push(Some(Outcome::Dead(dead_letter(r, format!("payload is not UTF-8: {e}"))))),
                Ok(text) => match filter.check(text) {
                    Verdict::Drop(reason) => outcomes.push(Some(Outcome::Dropped(reason.as_str()))),
                    Verdict::Keep => {
                        kept.push((i, text.to_string()));
                        outcomes.push(None);
                    }
                },
            }
        }
        let predictions: Vec<(usize, Result<Prediction, TrainError>)> =
            kept.par_iter().map(|(i, text)| (*i, classifier.classify(text))).collect();
        for ((i, pred), (_, text)) in predictions.into_iter().zip(&kept) {
            let r = &batch.records[i];
            outcomes[i] = Some(match pred {
                Ok(p) => {
                    let event = PredictionEvent {
                        source_partition: r.partition,
                        source_offset: r.offset,
                        text_digest: store::digest_bytes(text.as_bytes()),
                        label: p.label,
                        class: Label::from_u8(p.label).map_or("unknown", Label::as_str).to_string(),
                        score: p.score,
                        model_digest: classifier.model_digest.clone(),
                        processed_at: now_ms(),
                    };
                    Outcome::Event(event.to_json(), p.label)
                }
                Err(e) => Outcome::Dead(dead_letter(r, e.to_string())),
            });
        }
        let processed = Processed {
            seq: batch.seq,
            partitions: batch.records.iter().map(|r| r.partition).collect(),
            timestamps: batch.records.iter().map(|r| r.timestamp).collect(),
            outcomes: outcomes.into_iter().map(|o| o.expect("every record has an outcome")).collect(),
            commits: commits
                .into_iter()
                .map(|(p, o)| TopicPartitionOffset::new(&cfg.input_topic, p, o))
                .collect(),
        };
        if out.send(processed).is_err() {
            break;
        }
    }
    Ok(())
}

fn dead_letter(r: &Record, error: String) -> Vec<u8> {
    serde_json::to_vec(&DeadLetter {
        source_partition: r.partition,
        source_offset: r.offset,
        error,
        payload: String::from_utf8_lossy(&r.payload).into_owned(),
        processed_at: now_ms(),
    })
    .expect("dead letter serializes")
}

fn sink_stage(broker: &Broker, cfg: &StreamConfig, input: Receiver<Processed>, report: &mut StreamReport) -> Result<Vec<i64>> {
    let mut latencies = Vec::new();
    for batch in input {
        let keys: Vec<String> = batch.partitions.iter().map(u32::to_string).collect();
        let mut events: Vec<(Option<&[u8]>, &[u8])> = Vec::new();
        let mut dead: Vec<(Option<&[u8]>, &[u8])> = Vec::new();
        let mut event_ts = Vec::new();
        for (i, o) in batch.outcomes.iter().enumerate() {
            let key = Some(keys[i].as_bytes());
            match o {
                Outcome::Event(bytes, label) => {
                    events.push((key, bytes));
                    event_ts.push(batch.timestamps[i]);
                    if *label == Label::Suicide.as_u8() {
                        report.suicide += 1;
                    } else {
                        report.non_suicide += 1;
                    }
                }
                Outcome::Dead(bytes) => dead.push((key, bytes)),
                Outcome::Dropped(reason) => *report.dropped.entry((*reason).to_string()).or_default() += 1,
            }
        }
        if !events.is_empty() {
            broker.produce_batch(&cfg.output_topic, &events)?;
        }
        if !dead.is_empty() {
            broker.produce_batch(&cfg.dead_letter_topic, &dead)?;
        }
        let acked = now_ms();
        latencies.extend(event_ts.iter().map(|ts| acked - ts));
        report.batches += 1;
        report.consumed += batch.outcomes.len() as u64;
        report.events += events.len() as u64;
        report.dead_letters += dead.len() as u64;
        if cfg.fault == Some(Fault::CrashBeforeCommit { batch: batch.seq }) {
            return Err(StreamError::InjectedCrash { batch: batch.seq });
        }
        broker.commit(&cfg.group, &batch.commits)?;
    }
    Ok(latencies)
}

/// Runs the loop until `control` is stopped (or the input goes idle, if configured),
/// draining in-flight batches before returning.
pub fn run_stream(
    broker: &Broker,
    cfg: &StreamConfig,
    classifier: &Classifier,
    control: &StreamControl,
) -> Result<StreamReport> {
    cfg.validate()?;
    broker.topic_config(&cfg.input_topic)?;
    broker.topic_config(&cfg.output_topic)?;
    broker.topic_config(&cfg.dead_letter_topic)?;
    let consumer = broker.join(&cfg.group, &[cfg.input_topic.as_str()])?;
    let started = Instant::now();
    let halt = AtomicBool::new(false);
    let depth = cfg.queue_depth.max(1);
    let (batch_tx, batch_rx) = sync_channel::<Batch>(depth);
    let (done_tx, done_rx) = sync_channel::<Processed>(depth);
    let mut report = StreamReport::default();

    let (consumed, processed, sunk) = thread::scope(|s| {
        let consumer_handle = s.spawn(|| consume_stage(broker, consumer, cfg, control, &halt, batch_tx));
        let processor_handle = s.spawn(|| process_stage(cfg, classifier, batch_rx, done_tx));
        let sunk = sink_stage(broker, cfg, done_rx, &mut report);
        if sunk.is_err() {
            halt.store(true, Ordering::SeqCst);
        }
        let consumed = consumer_handle.join().unwrap_or(Err(StreamError::StageFailed("consume")));
        let processed = processor_handle.join().unwrap_or(Err(StreamError::StageFailed("process")));
        (consumed, processed, sunk)
    });
    let latencies = sunk?;
    consumed?;
    processed?;
    report.latency = LatencySummary::from_samples(latencies);
    report.elapsed_secs = started.elapsed().as_secs_f64();
    Ok(report)
}
