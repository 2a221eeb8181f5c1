//! Live class counts over the output topic, as a JSONL feed plus a final CSV.

use std::collections::{HashSet, VecDeque};
use std::io::Write;
use std::time::{Duration, Instant};

use ideation_broker::Broker;
use ideation_core::corpus::Label;
use serde::{Deserialize, Serialize};

use crate::engine::StreamControl;
use crate::error::Result;
use crate::event::PredictionEvent;

pub const DEFAULT_AGGREGATE_GROUP: &str = "aggregate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    #[default]
    AllTime,
    /// The most recent `n` distinct events.
    Sliding(usize),
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Window::AllTime => f.write_str("all-time"),
            Window::Sliding(n) => write!(f, "sliding-{n}"),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all-time" || s == "all" {
            return Ok(Window::AllTime);
        }
        let n = s.strip_prefix("sliding-").unwrap_or(s);
        match n.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Window::Sliding(n)),
            _ => Err(format!("window must be `all-time` or `sliding-N` with N > 0, got `{s}`")),
        }
    }
}

/// Percentages are `None` when there is nothing to divide by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub window: String,
    pub total: u64,
    pub suicide: u64,
    pub non_suicide: u64,
    pub suicide_pct: Option<f64>,
    pub non_suicide_pct: Option<f64>,
    /// Redelivered events skipped because their source offset was already counted.
    pub duplicates_skipped: u64,
    pub malformed_skipped: u64,
}

pub fn percent(part: u64, total: u64) -> Option<f64> {
    (total > 0).then(|| 100.0 * part as f64 / total as f64)
}

pub fn format_pct(p: Option<f64>) -> String {
    p.map_or_else(|| "NA".to_string(), |v| format!("{v:.2}"))
}

impl Snapshot {
    pub fn csv(&self) -> String {
        format!(
            "class,count,percent\nsuicide,{},{}\nnon-suicide,{},{}\ntotal,{},{}\n",
            self.suicide,
            format_pct(self.suicide_pct),
            self.non_suicide,
            format_pct(self.non_suicide_pct),
            self.total,
            if self.total > 0 { "100.00" } else { "NA" },
        )
    }
}

/// Counting state, separate from the broker so it can be fed directly.
#[derive(Debug, Clone)]
pub struct Aggregator {
    window: Window,
    seen: HashSet<(u32, u64)>,
    recent: VecDeque<bool>,
    suicide: u64,
    non_suicide: u64,
    duplicates: u64,
    malformed: u64,
}

impl Aggregator {
    pub fn new(window: Window) -> Self {
        Self {
            window,
            seen: HashSet::new(),
            recent: VecDeque::new(),
            suicide: 0,
            non_suicide: 0,
            duplicates: 0,
            malformed: 0,
        }
    }

    pub fn add(&mut self, event: &PredictionEvent) {
        if !self.seen.insert((event.source_partition, event.source_offset)) {
            self.duplicates += 1;
            return;
        }
        let positive = event.label == Label::Suicide.as_u8();
        self.bump(positive, 1);
        if let Window::Sliding(n) = self.window {
            self.recent.push_back(positive);
            if self.recent.len() > n {
                let old = self.recent.pop_front().unwrap();
                self.bump(old, -1);
            }
        }
    }

    pub fn add_raw(&mut self, payload: &[u8]) {
        match PredictionEvent::from_json(payload) {
            Ok(e) => self.add(&e),
            Err(_) => self.malformed += 1,
        }
    }

    fn bump(&mut self, positive: bool, by: i64) {
        let c = if positive { &mut self.suicide } else { &mut self.non_suicide };
        *c = c.checked_add_signed(by).expect("window counts never go negative");
    }

    pub fn snapshot(&self) -> Snapshot {
        let total = self.suicide + self.non_suicide;
        Snapshot {
            window: self.window.to_string(),
            total,
            suicide: self.suicide,
            non_suicide: self.non_suicide,
            suicide_pct: percent(self.suicide, total),
            non_suicide_pct: percent(self.non_suicide, total),
            duplicates_skipped: self.duplicates,
            malformed_skipped: self.malformed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateOptions {
    pub group: String,
    pub window: Window,
    /// Keep following the topic until stopped instead of returning once caught up.
    pub follow: bool,
    pub poll_timeout: Duration,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        Self {
            group: DEFAULT_AGGREGATE_GROUP.into(),
            window: Window::AllTime,
            follow: false,
            poll_timeout: Duration::from_millis(200),
        }
    }
}

/// Replays `topic` from the start with a dedicated group, writing one snapshot
/// line to `feed` per consumed batch, and returns the final snapshot.
pub fn aggregate(
    broker: &Broker,
    topic: &str,
    opts: &AggregateOptions,
    mut feed: Option<&mut dyn Write>,
    control: &StreamControl,
) -> Result<Snapshot> {
    broker.topic_config(topic)?;
    broker.replay_from(&opts.group, topic, 0)?;
    let mut consumer = broker.join(&opts.group, &[topic])?;
    let mut agg = Aggregator::new(opts.window);
    let started = Instant::now();
    loop {
        if control.is_stopped() {
            break;
        }
        let batch = consumer.poll(4096, opts.poll_timeout)?;
        if batch.is_empty() {
            let ends = broker.end_offsets(topic)?;
            let done = consumer
                .assignment()?
                .iter()
                .all(|(t, p)| consumer.position(t, *p).unwrap_or(0) >= ends[*p as usize]);
            if done && !opts.follow {
                break;
            }
            continue;
        }
        for r in &batch {
            agg.add_raw(&r.payload);
        }
        consumer.commit()?;
        if let Some(w) = feed.as_mut() {
            serde_json::to_writer(&mut *w, &agg.snapshot()).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
    }
    log::debug!("aggregated {topic} in {:.3}s", started.elapsed().as_secs_f64());
    Ok(agg.snapshot())
}
