use std::path::Path;

use anyhow::Result;
use ideation_broker::bench::{run_bench, BenchConfig};
use ideation_broker::{torture as crash, BrokerOptions, Durability, TopicConfig};

use super::stream::{broker_manifest, open_broker};
use super::{finish, Output};
use crate::cli::{BenchArgs, CreateTopicArgs, EndOffsetsArgs, TortureArgs};
use crate::manifest::{beside, Recorder};

/// Produce rate the bench report compares against.
pub const THROUGHPUT_TARGET: f64 = 50_000.0;

pub fn create_topic(a: &CreateTopicArgs, manifest: Option<&Path>) -> Result<Output> {
    let rec = Recorder::new("broker create-topic", a);
    let broker = open_broker(&a.broker)?;
    let config = TopicConfig::new(a.name.as_str(), a.partitions).with_retention(a.retention);
    if a.if_missing {
        broker.ensure_topic(config.clone())?;
    } else {
        broker.create_topic(config.clone())?;
    }
    let text = format!("topic {} ({} partitions)", a.name, a.partitions);
    finish(
        rec,
        manifest,
        Some(broker_manifest(&a.broker, "broker create-topic")),
        Output::new(&config, text)?,
    )
}

pub fn end_offsets(a: &EndOffsetsArgs, manifest: Option<&Path>) -> Result<Output> {
    let rec = Recorder::new("broker end-offsets", a);
    let broker = open_broker(&a.broker)?;
    let ends = broker.end_offsets(&a.topic)?;
    let starts = broker.start_offsets(&a.topic)?;
    let mut text = String::from("partition,start,end\n");
    for (p, (s, e)) in starts.iter().zip(&ends).enumerate() {
        text.push_str(&format!("{p},{s},{e}\n"));
    }
    let json = serde_json::json!({ "topic": a.topic, "start_offsets": starts, "end_offsets": ends });
    finish(rec, manifest, None, Output::new(json, text)?)
}

pub fn bench(a: &BenchArgs, manifest: Option<&Path>) -> Result<Output> {
    let mut rec = Recorder::new("broker bench", a);
    let scratch;
    let dir = match &a.dir {
        Some(d) => d.as_path(),
        None => {
            scratch = tempfile::tempdir()?;
            scratch.path()
        }
    };
    let options = BrokerOptions {
        durability: if a.fsync { Durability::Fsync } else { Durability::Flush },
        ..BrokerOptions::default()
    };
    let report = run_bench(
        dir,
        options,
        BenchConfig {
            records: a.records,
            payload_bytes: a.payload_bytes,
            batch: a.batch,
            partitions: a.partitions,
        },
    )?;
    let meets = report.produce_records_per_sec >= THROUGHPUT_TARGET;
    let json = serde_json::json!({
        "report": report,
        "target_records_per_sec": THROUGHPUT_TARGET,
        "meets_target": meets,
    });
    if let Some(p) = &a.out {
        rec.write(p, serde_json::to_string_pretty(&json)? + "\n")?;
    }
    let text = format!(
        "produce {:.0} rec/s ({:.1} MiB/s), consume {:.0} rec/s; {} records of {} bytes, batch {}, {} partition(s); target {:.0} rec/s {}",
        report.produce_records_per_sec,
        report.produce_mib_per_sec,
        report.consume_records_per_sec,
        a.records,
        a.payload_bytes,
        a.batch,
        a.partitions,
        THROUGHPUT_TARGET,
        if meets { "met" } else { "not met" }
    );
    finish(rec, manifest, a.out.as_deref().map(beside), Output::new(json, text)?)
}

pub fn torture(a: &TortureArgs) -> Result<Output> {
    crash::run_child(&a.dir, a.start_id, u64::MAX)?;
    Output::new(serde_json::json!({}), "")
}
