use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::broker::Broker;
use crate::error::Result;
use crate::types::{BrokerOptions, TopicConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchConfig {
    pub records: u64,
    pub payload_bytes: usize,
    pub batch: usize,
    pub partitions: u32,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            records: 200_000,
            payload_bytes: 200,
            batch: 1,
            partitions: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub produce_secs: f64,
    pub consume_secs: f64,
    pub produce_records_per_sec: f64,
    pub consume_records_per_sec: f64,
    pub produce_mib_per_sec: f64,
}

/// Produces then drains `config.records` records in a fresh topic under `dir`.
pub fn run_bench(dir: &Path, options: BrokerOptions, config: BenchConfig) -> Result<BenchReport> {
    let broker = Broker::open_with(dir, options)?;
    let topic = format!("bench-{}", crate::types::now_ms());
    broker.create_topic(TopicConfig::new(&topic, config.partitions.max(1)))?;
    let payload = vec![b'x'; config.payload_bytes];
    let batch = config.batch.max(1);

    let started = Instant::now();
    let mut produced = 0u64;
    while produced < config.records {
        let n = (batch as u64).min(config.records - produced) as usize;
        if n == 1 {
            broker.produce(&topic, None, &payload)?;
        } else {
            let recs: Vec<(Option<&[u8]>, &[u8])> = (0..n).map(|_| (None, payload.as_slice())).collect();
            broker.produce_batch(&topic, &recs)?;
        }
        produced += n as u64;
    }
    let produce_secs = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let mut consumer = broker.join("bench", &[&topic])?;
    let mut seen = 0u64;
    while seen < config.records {
        let got = consumer.poll(4096, Duration::from_millis(100))?;
        if got.is_empty() {
            break;
        }
        seen += got.len() as u64;
    }
    let consume_secs = started.elapsed().as_secs_f64();

    let rate = |n: u64, s: f64| if s > 0.0 { n as f64 / s } else { f64::INFINITY };
    Ok(BenchReport {
        config,
        produce_secs,
        consume_secs,
        produce_records_per_sec: rate(config.records, produce_secs),
        consume_records_per_sec: rate(seen, consume_secs),
        produce_mib_per_sec: rate(config.records * config.payload_bytes as u64, produce_secs) / (1024.0 * 1024.0),
    })
}
