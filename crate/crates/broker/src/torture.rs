//! Kill-and-restart harness for the at-least-once contract.
//!
//! A child process produces numbered records and consumes them in a group,
//! printing `P <id>` after each acknowledged produce and `C <id>` for each
//! consumed record before committing. The driver kills it at chosen points,
//! restarts it, and finally checks that every acknowledged id was consumed.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::broker::Broker;
use crate::error::{BrokerError, Result};
use crate::types::TopicConfig;

pub const TOPIC: &str = "torture";
pub const GROUP: &str = "torture-group";
const PARTITIONS: u32 = 3;

/// Ids produced by restart `round` start here so rounds never collide.
pub fn first_id(round: u64) -> u64 {
    round * 1_000_000_000
}

fn open_retrying(dir: &Path) -> Result<Broker> {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        match Broker::open(dir) {
            Err(BrokerError::BrokerLocked(_)) if Instant::now() < deadline => {
                thread::sleep(Duration::from_millis(10));
            }
            other => return other,
        }
    }
}

/// Child side. Runs until killed or until `limit` records have been produced.
pub fn run_child(dir: &Path, start_id: u64, limit: u64) -> Result<()> {
    let broker = open_retrying(dir)?;
    broker.ensure_topic(TopicConfig::new(TOPIC, PARTITIONS))?;
    let out = Arc::new(Mutex::new(std::io::stdout()));
    let say = |out: &Mutex<std::io::Stdout>, line: String| {
        let mut o = out.lock().unwrap();
        let _ = writeln!(o, "{line}");
        let _ = o.flush();
    };

    let consumer_broker = broker.clone();
    let consumer_out = out.clone();
    let consumer = thread::spawn(move || -> Result<()> {
        let mut c = consumer_broker.join(GROUP, &[TOPIC])?;
        loop {
            let batch = c.poll(64, Duration::from_millis(50))?;
            for r in &batch {
                say(&consumer_out, format!("C {}", String::from_utf8_lossy(&r.payload)));
            }
            if !batch.is_empty() {
                c.commit()?;
            }
        }
    });

    for id in start_id..start_id.saturating_add(limit) {
        broker.produce(TOPIC, None, id.to_string().as_bytes())?;
        say(&out, format!("P {id}"));
        if consumer.is_finished() {
            break;
        }
    }
    match consumer.join() {
        Ok(r) => r,
        Err(_) => Err(BrokerError::InvalidConfig("consumer thread panicked".into())),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TortureReport {
    pub rounds: usize,
    pub acked: usize,
    pub consumed_distinct: usize,
    pub redelivered: usize,
    pub lost: Vec<u64>,
    /// Partitions whose offsets were not 0, 1, 2, ... after recovery.
    pub gapped_partitions: Vec<u32>,
}

impl TortureReport {
    pub fn passed(&self) -> bool {
        self.lost.is_empty() && self.gapped_partitions.is_empty() && self.acked > 0
    }
}

/// Complete lines only; a kill can leave half a line in the pipe.
fn collect_lines(child: &mut Child) -> thread::JoinHandle<Vec<String>> {
    let stdout = child.stdout.take().expect("child stdout is piped");
    thread::spawn(move || {
        let mut r = BufReader::new(stdout);
        let mut lines = Vec::new();
        let mut buf = String::new();
        while matches!(r.read_line(&mut buf), Ok(n) if n > 0) {
            if let Some(l) = buf.strip_suffix('\n') {
                lines.push(l.to_string());
            }
            buf.clear();
        }
        lines
    })
}

/// Kills a fresh child after each delay in `kill_after`, then drains and checks the log.
/// `spawn(start_id)` must return a child running [`run_child`] with piped stdout.
pub fn drive(
    dir: &Path,
    kill_after: &[Duration],
    mut spawn: impl FnMut(u64) -> std::io::Result<Child>,
) -> Result<TortureReport> {
    let mut acked = BTreeSet::new();
    let mut consumed = Vec::new();
    for (round, delay) in kill_after.iter().enumerate() {
        let mut child = spawn(first_id(round as u64 + 1)).map_err(crate::error::io_err(dir))?;
        child.stdin.take();
        let lines = collect_lines(&mut child);
        thread::sleep(*delay);
        let _ = child.kill();
        let _ = child.wait();
        for line in lines.join().unwrap_or_default() {
            // the marker is the last two tokens; a host process may prefix the first line
            let mut tokens = line.split_whitespace().rev();
            let (Some(id), Some(tag)) = (tokens.next(), tokens.next()) else {
                continue;
            };
            let Ok(id) = id.parse::<u64>() else {
                continue;
            };
            match tag {
                "P" => {
                    acked.insert(id);
                }
                "C" => consumed.push(id),
                _ => {}
            }
        }
    }

    let broker = open_retrying(dir)?;
    broker.ensure_topic(TopicConfig::new(TOPIC, PARTITIONS))?;
    let mut gapped = Vec::new();
    for (p, &end) in broker.end_offsets(TOPIC)?.iter().enumerate() {
        let recs = broker.read(TOPIC, p as u32, 0, end as usize)?;
        if recs.len() as u64 != end || recs.iter().enumerate().any(|(i, r)| r.offset != i as u64) {
            gapped.push(p as u32);
        }
    }
    let mut c = broker.join(GROUP, &[TOPIC])?;
    loop {
        let batch = c.poll(4096, Duration::from_millis(20))?;
        if batch.is_empty() {
            break;
        }
        consumed.extend(batch.iter().map(|r| String::from_utf8_lossy(&r.payload).parse::<u64>().unwrap_or(u64::MAX)));
        c.commit()?;
    }
    let distinct: BTreeSet<u64> = consumed.iter().copied().collect();
    Ok(TortureReport {
        rounds: kill_after.len(),
        acked: acked.len(),
        consumed_distinct: distinct.len(),
        redelivered: consumed.len() - distinct.len(),
        lost: acked.difference(&distinct).copied().collect(),
        gapped_partitions: gapped,
    })
}

/// Spawn helper for callers that re-run a binary with extra arguments.
pub fn piped(mut cmd: std::process::Command) -> std::io::Result<Child> {
    cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::null()).spawn()
}
