//! The ingestion boundary: turns a text or JSONL source into input-topic records.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use ideation_broker::Broker;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayOptions {
    /// Records per second; 0 replays at full speed.
    pub rate: f64,
    /// Start over at end of input until stopped (or `max_records` is reached).
    pub repeat: bool,
    pub max_records: Option<u64>,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            rate: 0.0,
            repeat: false,
            max_records: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub produced: u64,
    pub malformed: u64,
    pub blank: u64,
    pub passes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedLine {
    Text(String),
    Blank,
    Malformed(String),
}

/// A line is either raw text or a JSON object with a string `text` field.
pub fn parse_line(raw: &[u8]) -> ParsedLine {
    let raw = raw.strip_suffix(b"\n").unwrap_or(raw);
    let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
    let Ok(line) = std::str::from_utf8(raw) else {
        return ParsedLine::Malformed("invalid UTF-8".into());
    };
    if line.trim().is_empty() {
        return ParsedLine::Blank;
    }
    if line.trim_start().starts_with('{') {
        return match serde_json::from_str::<serde_json::Value>(line) {
            Ok(v) => match v.get("text").and_then(|t| t.as_str()) {
                Some(t) if !t.trim().is_empty() => ParsedLine::Text(t.to_string()),
                Some(_) => ParsedLine::Blank,
                None => ParsedLine::Malformed("JSON line without a string `text` field".into()),
            },
            Err(e) => ParsedLine::Malformed(format!("bad JSON: {e}")),
        };
    }
    ParsedLine::Text(line.to_string())
}

struct Pacer {
    started: Instant,
    interval: Option<Duration>,
}

impl Pacer {
    fn new(rate: f64) -> Self {
        Self {
            started: Instant::now(),
            interval: (rate > 0.0).then(|| Duration::from_secs_f64(1.0 / rate)),
        }
    }

    fn wait(&self, n: u64) {
        if let Some(i) = self.interval {
            let due = self.started + i.mul_f64(n as f64);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
    }
}

/// One pass over `reader`. `pacer` and the running report carry across passes.
fn replay_pass(
    broker: &Broker,
    topic: &str,
    reader: impl BufRead,
    opts: &ReplayOptions,
    pacer: &Pacer,
    report: &mut ReplayReport,
    stop: &AtomicBool,
) -> Result<bool> {
    for line in reader.split(b'\n') {
        if stop.load(Ordering::Relaxed) || opts.max_records.is_some_and(|m| report.produced >= m) {
            return Ok(false);
        }
        match parse_line(&line?) {
            ParsedLine::Text(t) => {
                pacer.wait(report.produced);
                broker.produce(topic, None, t.as_bytes())?;
                report.produced += 1;
            }
            ParsedLine::Blank => report.blank += 1,
            ParsedLine::Malformed(why) => {
                log::warn!("skipping malformed line: {why}");
                report.malformed += 1;
            }
        }
    }
    Ok(true)
}

/// Replays a reader once.
pub fn replay_reader(
    broker: &Broker,
    topic: &str,
    reader: impl BufRead,
    opts: &ReplayOptions,
    stop: &AtomicBool,
) -> Result<ReplayReport> {
    broker.topic_config(topic)?;
    let mut report = ReplayReport::default();
    replay_pass(broker, topic, reader, opts, &Pacer::new(opts.rate), &mut report, stop)?;
    report.passes = 1;
    Ok(report)
}

/// Replays a file, reopening it at end of input when `opts.repeat` is set.
pub fn replay_file(
    broker: &Broker,
    topic: &str,
    path: &Path,
    opts: &ReplayOptions,
    stop: &AtomicBool,
) -> Result<ReplayReport> {
    broker.topic_config(topic)?;
    let pacer = Pacer::new(opts.rate);
    let mut report = ReplayReport::default();
    loop {
        let reader = BufReader::new(File::open(path)?);
        let finished = replay_pass(broker, topic, reader, opts, &pacer, &mut report, stop)?;
        report.passes += 1;
        // an input with no text lines would spin forever
        if !finished || !opts.repeat || report.produced == 0 {
            return Ok(report);
        }
    }
}
