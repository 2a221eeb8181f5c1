use std::collections::HashMap;
use std::process::Command;
use std::thread;
use std::time::Duration;

use ideation_broker::bench::{run_bench, BenchConfig};
use ideation_broker::{torture, Broker, BrokerOptions, TopicConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Check, Verdict};

const PRODUCERS: u64 = 8;
const PER_PRODUCER: u64 = 10_000;

fn parse(payload: &[u8]) -> Option<(u64, u64)> {
    let (p, i) = std::str::from_utf8(payload).ok()?.split_once(':')?;
    Some((p.parse().ok()?, i.parse().ok()?))
}

fn ordering_and_conservation() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = Broker::open(dir.path()).map_err(|e| e.to_string())?;
    b.create_topic(TopicConfig::new("t", 4)).map_err(|e| e.to_string())?;
    let handles: Vec<_> = (0..PRODUCERS)
        .map(|p| {
            let b = b.clone();
            thread::spawn(move || {
                let key = format!("producer-{p}");
                for i in 0..PER_PRODUCER {
                    // odd producers are keyed so they stick to one partition
                    let k = (p % 2 == 1).then_some(key.as_bytes());
                    b.produce("t", k, format!("{p}:{i}").as_bytes()).expect("produce");
                }
            })
        })
        .collect();
    for h in handles {
        h.join().map_err(|_| "producer panicked".to_string())?;
    }
    let ends = b.end_offsets("t").map_err(|e| e.to_string())?;
    ensure!(ends.iter().sum::<u64>() == PRODUCERS * PER_PRODUCER, "end offsets {ends:?}");
    for (p, &end) in ends.iter().enumerate() {
        let recs = b.read("t", p as u32, 0, end as usize).map_err(|e| e.to_string())?;
        ensure!(
            recs.len() as u64 == end && recs.iter().enumerate().all(|(i, r)| r.offset == i as u64),
            "partition {p} has gaps"
        );
        let mut last: HashMap<u64, u64> = HashMap::new();
        for r in &recs {
            let (prod, i) = parse(&r.payload).ok_or("bad payload")?;
            if let Some(prev) = last.insert(prod, i) {
                ensure!(i > prev, "partition {p}: producer {prod} reordered {prev} -> {i}");
            }
        }
    }

    let mut members: Vec<_> = (0..3).map(|_| b.join("g", &["t"])).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut counts: HashMap<(u64, u64), u32> = HashMap::new();
    loop {
        let mut got = 0;
        for c in members.iter_mut() {
            let batch = c.poll(2048, Duration::ZERO).map_err(|e| e.to_string())?;
            got += batch.len();
            for r in batch {
                *counts.entry(parse(&r.payload).ok_or("bad payload")?).or_default() += 1;
            }
            c.commit().map_err(|e| e.to_string())?;
        }
        if got == 0 {
            break;
        }
    }
    ensure!(
        counts.len() as u64 == PRODUCERS * PER_PRODUCER && counts.values().all(|&c| c == 1),
        "drain saw {} distinct records",
        counts.len()
    );
    ensure!(b.committed("g", "t").map_err(|e| e.to_string())? == ends, "group did not commit to the end");
    Ok(format!("{} records gapless, drained exactly once", PRODUCERS * PER_PRODUCER))
}

fn crash_replay() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let kills: Vec<Duration> = (0..20).map(|_| Duration::from_millis(rng.gen_range(50..300))).collect();
    let exe = env!("CARGO_BIN_EXE_ideation");
    let report = torture::drive(dir.path(), &kills, |start| {
        let mut cmd = Command::new(exe);
        cmd.args(["-q", "broker", "torture", "--dir"])
            .arg(dir.path())
            .args(["--start-id", &start.to_string()]);
        torture::piped(cmd)
    })
    .map_err(|e| e.to_string())?;
    ensure!(report.acked > 100, "children barely ran: {report:?}");
    ensure!(report.lost.is_empty(), "{} acked records lost, e.g. {:?}", report.lost.len(), &report.lost[..report.lost.len().min(5)]);
    ensure!(report.gapped_partitions.is_empty(), "gaps after recovery in {:?}", report.gapped_partitions);
    Ok(format!(
        "20 kills, {} acked, 0 lost, {} redelivered",
        report.acked, report.redelivered
    ))
}

pub fn contract() -> Check {
    let a = ordering_and_conservation()?;
    let b = crash_replay()?;
    Ok(format!("{a}; {b}"))
}

pub fn throughput() -> Verdict {
    let run = || -> Result<String, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let r = run_bench(
            dir.path(),
            BrokerOptions::default(),
            BenchConfig {
                records: 200_000,
                payload_bytes: 200,
                batch: 1,
                partitions: 1,
            },
        )
        .map_err(|e| e.to_string())?;
        let mark = if r.produce_records_per_sec >= 50_000.0 { "meets" } else { "below" };
        Ok(format!(
            "produce {:.0} rec/s, consume {:.0} rec/s ({mark} 50000 rec/s)",
            r.produce_records_per_sec, r.consume_records_per_sec
        ))
    };
    match run() {
        Ok(s) => Verdict::Info(s),
        Err(e) => Verdict::Fail(e),
    }
}
