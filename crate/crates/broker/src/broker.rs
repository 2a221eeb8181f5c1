//! Directory layout:
//!
//! ```text
//! <dir>/broker.lock
//! <dir>/topics/<topic>/topic.json
//! <dir>/topics/<topic>/<partition>/<base offset>.log
//! <dir>/topics/<topic>/<partition>/start        (log start, only after retention trims)
//! <dir>/groups/<group>.json                     (committed offsets)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, BrokerError, Result};
use crate::fsutil::{sync_dir, write_atomic};
use crate::log::Partition;
use crate::types::{
    now_ms, partition_for_key, validate_name, BrokerOptions, Durability, OverflowPolicy, Record, TopicConfig,
    TopicPartitionOffset,
};

const TOPIC_META: &str = "topic.json";

struct Topic {
    config: TopicConfig,
    partitions: Vec<Partition>,
    round_robin: AtomicU64,
}

impl Topic {
    fn partition(&self, p: u32) -> Result<&Partition> {
        self.partitions.get(p as usize).ok_or_else(|| BrokerError::UnknownPartition {
            topic: self.config.name.clone(),
            partition: p,
        })
    }
}

#[derive(Default)]
struct Group {
    offsets: BTreeMap<String, BTreeMap<u32, u64>>,
    /// member id -> subscribed topics
    members: BTreeMap<u64, Vec<String>>,
    generation: u64,
    resets: u64,
    next_member: u64,
}

#[derive(Serialize, Deserialize)]
struct GroupFile {
    group: String,
    offsets: BTreeMap<String, BTreeMap<u32, u64>>,
}

/// Wakes blocked consumers on appends and blocked producers on commits.
#[derive(Default)]
struct Signal {
    seq: Mutex<u64>,
    cv: Condvar,
}

impl Signal {
    fn current(&self) -> u64 {
        *self.seq.lock().unwrap()
    }

    fn bump(&self) {
        *self.seq.lock().unwrap() += 1;
        self.cv.notify_all();
    }

    /// Waits until the sequence moves past `seen`; false on timeout.
    fn wait_past(&self, seen: u64, deadline: Instant) -> bool {
        let mut seq = self.seq.lock().unwrap();
        while *seq == seen {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            seq = self.cv.wait_timeout(seq, deadline - now).unwrap().0;
        }
        true
    }
}

struct Inner {
    dir: PathBuf,
    options: BrokerOptions,
    _lock: File,
    topics: RwLock<BTreeMap<String, Arc<Topic>>>,
    groups: Mutex<BTreeMap<String, Group>>,
    appended: Signal,
    committed: Signal,
}

/// Handle to an open log directory. Cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct Broker {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Broker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Broker").field("dir", &self.inner.dir).finish_non_exhaustive()
    }
}

impl Broker {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(dir, BrokerOptions::default())
    }

    /// Opens (creating if needed) a log directory, recovering every partition.
    pub fn open_with(dir: impl AsRef<Path>, options: BrokerOptions) -> Result<Self> {
        if options.segment_bytes == 0 {
            return Err(BrokerError::InvalidConfig("segment size must be positive".into()));
        }
        let dir = dir.as_ref().to_path_buf();
        for sub in ["topics", "groups"] {
            let d = dir.join(sub);
            fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        let lock_path = dir.join("broker.lock");
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(io_err(&lock_path))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(BrokerError::BrokerLocked(dir)),
            Err(fs::TryLockError::Error(e)) => return Err(io_err(&lock_path)(e)),
        }

        let mut topics = BTreeMap::new();
        let topics_dir = dir.join("topics");
        for entry in fs::read_dir(&topics_dir).map_err(io_err(&topics_dir))? {
            let entry = entry.map_err(io_err(&topics_dir))?;
            let meta = entry.path().join(TOPIC_META);
            if !meta.exists() {
                // a create that died before its metadata landed
                continue;
            }
            let config: TopicConfig = read_json(&meta)?;
            let partitions = (0..config.partitions)
                .map(|p| Partition::open(&entry.path().join(p.to_string()), options.segment_bytes, options.durability))
                .collect::<Result<Vec<_>>>()?;
            topics.insert(
                config.name.clone(),
                Arc::new(Topic {
                    config,
                    partitions,
                    round_robin: AtomicU64::new(0),
                }),
            );
        }

        let mut groups = BTreeMap::new();
        let groups_dir = dir.join("groups");
        for entry in fs::read_dir(&groups_dir).map_err(io_err(&groups_dir))? {
            let path = entry.map_err(io_err(&groups_dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let file: GroupFile = read_json(&path)?;
                groups.insert(
                    file.group,
                    Group {
                        offsets: file.offsets,
                        ..Group::default()
                    },
                );
            }
        }

        Ok(Self {
            inner: Arc::new(Inner {
                dir,
                options,
                _lock: lock,
                topics: RwLock::new(topics),
                groups: Mutex::new(groups),
                appended: Signal::default(),
                committed: Signal::default(),
            }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.inner.dir
    }

    pub fn options(&self) -> BrokerOptions {
        self.inner.options
    }

    fn topic(&self, name: &str) -> Result<Arc<Topic>> {
        self.inner
            .topics
            .read()
            .unwrap()
            .get(name)
            .cloned()
            .ok_or_else(|| BrokerError::UnknownTopic(name.to_string()))
    }

    pub fn create_topic(&self, config: TopicConfig) -> Result<()> {
        config.validate()?;
        let mut topics = self.inner.topics.write().unwrap();
        if topics.contains_key(&config.name) {
            return Err(BrokerError::TopicExists(config.name));
        }
        let tdir = self.inner.dir.join("topics").join(&config.name);
        if tdir.exists() {
            // leftovers of an interrupted create
            fs::remove_dir_all(&tdir).map_err(io_err(&tdir))?;
        }
        let partitions = (0..config.partitions)
            .map(|p| {
                Partition::create(
                    &tdir.join(p.to_string()),
                    self.inner.options.segment_bytes,
                    self.inner.options.durability,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let meta = serde_json::to_vec_pretty(&config).expect("topic config serializes");
        write_atomic(&tdir.join(TOPIC_META), &meta, true)?;
        sync_dir(&self.inner.dir.join("topics"));
        log::info!("created topic {} with {} partition(s)", config.name, config.partitions);
        topics.insert(
            config.name.clone(),
            Arc::new(Topic {
                config,
                partitions,
                round_robin: AtomicU64::new(0),
            }),
        );
        Ok(())
    }

    /// Creates the topic unless it already exists (with any configuration).
    pub fn ensure_topic(&self, config: TopicConfig) -> Result<()> {
        match self.create_topic(config) {
            Err(BrokerError::TopicExists(_)) => Ok(()),
            other => other,
        }
    }

    pub fn topics(&self) -> Vec<TopicConfig> {
        self.inner.topics.read().unwrap().values().map(|t| t.config.clone()).collect()
    }

    pub fn topic_config(&self, name: &str) -> Result<TopicConfig> {
        Ok(self.topic(name)?.config.clone())
    }

    /// Appends one record; keyed records go to `fnv1a(key) % partitions`, others round-robin.
    pub fn produce(&self, topic: &str, key: Option<&[u8]>, payload: &[u8]) -> Result<(u32, u64)> {
        let t = self.topic(topic)?;
        let p = self.pick_partition(&t, key);
        let offset = self.append(&t, p, &[(key, payload)])?;
        Ok((p, offset))
    }

    pub fn produce_to(&self, topic: &str, partition: u32, key: Option<&[u8]>, payload: &[u8]) -> Result<u64> {
        let t = self.topic(topic)?;
        t.partition(partition)?;
        self.append(&t, partition, &[(key, payload)])
    }

    /// Appends many records with one write per partition touched. Results follow input order.
    pub fn produce_batch(&self, topic: &str, records: &[(Option<&[u8]>, &[u8])]) -> Result<Vec<(u32, u64)>> {
        let t = self.topic(topic)?;
        let mut by_partition: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, (key, _)) in records.iter().enumerate() {
            by_partition.entry(self.pick_partition(&t, *key)).or_default().push(i);
        }
        let mut out = vec![(0, 0); records.len()];
        for (p, idxs) in by_partition {
            let chunk: Vec<(Option<&[u8]>, &[u8])> = idxs.iter().map(|&i| records[i]).collect();
            let first = self.append(&t, p, &chunk)?;
            for (k, &i) in idxs.iter().enumerate() {
                out[i] = (p, first + k as u64);
            }
        }
        Ok(out)
    }

    fn pick_partition(&self, t: &Topic, key: Option<&[u8]>) -> u32 {
        let n = t.config.partitions;
        match key {
            Some(k) => partition_for_key(k, n),
            None => (t.round_robin.fetch_add(1, Ordering::Relaxed) % u64::from(n)) as u32,
        }
    }

    fn append(&self, t: &Topic, p: u32, records: &[(Option<&[u8]>, &[u8])]) -> Result<u64> {
        let part = t.partition(p)?;
        if t.config.retention > 0 {
            self.make_room(t, p, records.len() as u64)?;
        }
        let first = part.append(now_ms(), records)?;
        self.inner.appended.bump();
        Ok(first)
    }

    /// Trims records every committing group has moved past until `n` more fit.
    fn make_room(&self, t: &Topic, p: u32, n: u64) -> Result<()> {
        let limit = t.config.retention;
        let overflow = || BrokerError::RetentionOverflow {
            topic: t.config.name.clone(),
            partition: p,
            limit,
        };
        if n > limit {
            return Err(overflow());
        }
        let part = t.partition(p)?;
        let deadline = match self.inner.options.overflow {
            OverflowPolicy::Error => None,
            OverflowPolicy::Block(d) => Some(Instant::now() + d),
        };
        loop {
            let seen = self.inner.committed.current();
            let (start, end) = part.bounds();
            if end - start + n <= limit {
                return Ok(());
            }
            let floor = self.commit_floor(&t.config.name, p).unwrap_or(start);
            if floor > start {
                part.advance_start(floor)?;
                continue;
            }
            match deadline {
                Some(d) if self.inner.committed.wait_past(seen, d) => {}
                _ => return Err(overflow()),
            }
        }
    }

    fn commit_floor(&self, topic: &str, p: u32) -> Option<u64> {
        let groups = self.inner.groups.lock().unwrap();
        groups
            .values()
            .filter_map(|g| g.offsets.get(topic).and_then(|m| m.get(&p)).copied())
            .min()
    }

    pub fn end_offsets(&self, topic: &str) -> Result<Vec<u64>> {
        Ok(self.topic(topic)?.partitions.iter().map(Partition::end_offset).collect())
    }

    pub fn start_offsets(&self, topic: &str) -> Result<Vec<u64>> {
        Ok(self.topic(topic)?.partitions.iter().map(Partition::start_offset).collect())
    }

    pub fn segment_counts(&self, topic: &str) -> Result<Vec<usize>> {
        Ok(self.topic(topic)?.partitions.iter().map(Partition::segment_count).collect())
    }

    /// Direct read of one partition, bypassing groups.
    pub fn read(&self, topic: &str, partition: u32, from: u64, max: usize) -> Result<Vec<Record>> {
        let t = self.topic(topic)?;
        read_partition(&t, partition, from, max)
    }

    /// Next offset per partition for `group`: its commit, or the log start.
    pub fn committed(&self, group: &str, topic: &str) -> Result<Vec<u64>> {
        let t = self.topic(topic)?;
        let groups = self.inner.groups.lock().unwrap();
        let offsets = groups.get(group).and_then(|g| g.offsets.get(topic));
        Ok(t.partitions
            .iter()
            .enumerate()
            .map(|(p, part)| {
                let c = offsets.and_then(|m| m.get(&(p as u32))).copied().unwrap_or(0);
                c.max(part.start_offset())
            })
            .collect())
    }

    /// Records after `group`'s committed offsets, without moving them. Waits up to
    /// `timeout` when nothing is available and returns an empty batch if that expires.
    pub fn consume(&self, topic: &str, group: &str, max: usize, timeout: Duration) -> Result<Vec<Record>> {
        validate_name(group)?;
        let t = self.topic(topic)?;
        let deadline = Instant::now() + timeout;
        loop {
            let seen = self.inner.appended.current();
            let from: HashMap<(String, u32), u64> = self
                .committed(group, topic)?
                .into_iter()
                .enumerate()
                .map(|(p, o)| ((topic.to_string(), p as u32), o))
                .collect();
            let order: Vec<(String, u32)> = (0..t.config.partitions).map(|p| (topic.to_string(), p)).collect();
            let batch = self.gather(&order, 0, &from, max)?;
            if !batch.is_empty() || !self.inner.appended.wait_past(seen, deadline) {
                return Ok(batch);
            }
        }
    }

    /// Reads across `order` starting at index `cursor`, taking what each partition has.
    fn gather(
        &self,
        order: &[(String, u32)],
        cursor: usize,
        from: &HashMap<(String, u32), u64>,
        max: usize,
    ) -> Result<Vec<Record>> {
        let mut out = Vec::new();
        for i in 0..order.len() {
            if out.len() >= max {
                break;
            }
            let key = &order[(cursor + i) % order.len()];
            let t = self.topic(&key.0)?;
            let start = from.get(key).copied().unwrap_or(0);
            out.extend(read_partition(&t, key.1, start, max - out.len())?);
        }
        Ok(out)
    }

    /// Durably records `offsets` as the next positions for `group`.
    pub fn commit(&self, group: &str, offsets: &[TopicPartitionOffset]) -> Result<()> {
        validate_name(group)?;
        for o in offsets {
            let t = self.topic(&o.topic)?;
            let (start, end) = t.partition(o.partition)?.bounds();
            if o.offset > end || o.offset < start {
                return Err(BrokerError::OffsetOutOfRange {
                    topic: o.topic.clone(),
                    partition: o.partition,
                    offset: o.offset,
                    start,
                    end,
                });
            }
        }
        let mut groups = self.inner.groups.lock().unwrap();
        let g = groups.entry(group.to_string()).or_default();
        let mut next = g.offsets.clone();
        for o in offsets {
            next.entry(o.topic.clone()).or_default().insert(o.partition, o.offset);
        }
        self.persist_group(group, &next)?;
        g.offsets = next;
        drop(groups);
        self.inner.committed.bump();
        Ok(())
    }

    fn persist_group(&self, group: &str, offsets: &BTreeMap<String, BTreeMap<u32, u64>>) -> Result<()> {
        let file = GroupFile {
            group: group.to_string(),
            offsets: offsets.clone(),
        };
        let bytes = serde_json::to_vec(&file).expect("group offsets serialize");
        let path = self.inner.dir.join("groups").join(format!("{group}.json"));
        write_atomic(&path, &bytes, self.inner.options.durability == Durability::Fsync)
    }

    /// Rewinds (or advances) every partition of `topic` for `group` to `offset`.
    /// Live members of the group drop their in-memory positions.
    pub fn replay_from(&self, group: &str, topic: &str, offset: u64) -> Result<()> {
        let t = self.topic(topic)?;
        let offsets: Vec<TopicPartitionOffset> = (0..t.config.partitions)
            .map(|p| TopicPartitionOffset::new(topic, p, offset))
            .collect();
        self.commit(group, &offsets)?;
        let mut groups = self.inner.groups.lock().unwrap();
        if let Some(g) = groups.get_mut(group) {
            g.resets += 1;
        }
        Ok(())
    }

    pub fn groups(&self) -> Vec<String> {
        self.inner.groups.lock().unwrap().keys().cloned().collect()
    }

    /// Joins `group` as a new member subscribed to `topics`; partitions are range-assigned.
    pub fn join(&self, group: &str, topics: &[&str]) -> Result<Consumer> {
        validate_name(group)?;
        for t in topics {
            self.topic(t)?;
        }
        let mut groups = self.inner.groups.lock().unwrap();
        let g = groups.entry(group.to_string()).or_default();
        let id = g.next_member;
        g.next_member += 1;
        g.members.insert(id, topics.iter().map(|s| s.to_string()).collect());
        g.generation += 1;
        drop(groups);
        Ok(Consumer {
            broker: self.clone(),
            group: group.to_string(),
            id,
            generation: u64::MAX,
            resets: 0,
            assignment: Vec::new(),
            positions: HashMap::new(),
            cursor: 0,
        })
    }

    fn leave(&self, group: &str, id: u64) {
        let mut groups = self.inner.groups.lock().unwrap();
        if let Some(g) = groups.get_mut(group) {
            if g.members.remove(&id).is_some() {
                g.generation += 1;
            }
        }
    }

    /// Forces every partition's active segment to stable storage.
    pub fn sync(&self) -> Result<()> {
        for t in self.inner.topics.read().unwrap().values() {
            for p in &t.partitions {
                p.sync()?;
            }
        }
        Ok(())
    }
}

fn read_partition(t: &Topic, partition: u32, from: u64, max: usize) -> Result<Vec<Record>> {
    Ok(t.partition(partition)?
        .read(from, max)?
        .into_iter()
        .map(|r| Record {
            topic: t.config.name.clone(),
            partition,
            offset: r.offset,
            key: r.key,
            payload: r.payload,
            timestamp: r.timestamp,
        })
        .collect())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| BrokerError::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Range assignment: per topic, members in id order take contiguous partition runs,
/// the first `partitions % members` of them one extra.
pub fn range_assign(members: &BTreeMap<u64, Vec<String>>, partitions: &BTreeMap<String, u32>) -> BTreeMap<u64, Vec<(String, u32)>> {
    let mut out: BTreeMap<u64, Vec<(String, u32)>> = members.keys().map(|&m| (m, Vec::new())).collect();
    for (topic, &n) in partitions {
        let subs: Vec<u64> = members
            .iter()
            .filter(|(_, ts)| ts.iter().any(|t| t == topic))
            .map(|(&m, _)| m)
            .collect();
        if subs.is_empty() {
            continue;
        }
        let k = subs.len() as u32;
        let (base, extra) = (n / k, n % k);
        let mut next = 0;
        for (i, m) in subs.iter().enumerate() {
            let take = base + u32::from((i as u32) < extra);
            for p in next..next + take {
                out.get_mut(m).unwrap().push((topic.clone(), p));
            }
            next += take;
        }
    }
    out
}

/// A member of a consumer group. Positions live in memory; `commit` makes them durable.
pub struct Consumer {
    broker: Broker,
    group: String,
    id: u64,
    generation: u64,
    resets: u64,
    assignment: Vec<(String, u32)>,
    positions: HashMap<(String, u32), u64>,
    cursor: usize,
}

impl std::fmt::Debug for Consumer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Consumer")
            .field("group", &self.group)
            .field("id", &self.id)
            .field("assignment", &self.assignment)
            .finish_non_exhaustive()
    }
}

impl Consumer {
    pub fn member_id(&self) -> u64 {
        self.id
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    fn refresh(&mut self) -> Result<()> {
        let groups = self.broker.inner.groups.lock().unwrap();
        let g = groups.get(&self.group).expect("joined group exists");
        if g.generation == self.generation && g.resets == self.resets {
            return Ok(());
        }
        if g.resets != self.resets {
            self.positions.clear();
            self.resets = g.resets;
        }
        let topics = self.broker.inner.topics.read().unwrap();
        let counts: BTreeMap<String, u32> = g
            .members
            .values()
            .flatten()
            .filter_map(|t| topics.get(t).map(|tp| (t.clone(), tp.config.partitions)))
            .collect();
        let assignment = range_assign(&g.members, &counts).remove(&self.id).unwrap_or_default();
        let mut positions = HashMap::new();
        for tp in &assignment {
            let pos = match self.positions.get(tp) {
                Some(&p) => p,
                None => {
                    let committed = g.offsets.get(&tp.0).and_then(|m| m.get(&tp.1)).copied().unwrap_or(0);
                    committed.max(topics[&tp.0].partitions[tp.1 as usize].start_offset())
                }
            };
            positions.insert(tp.clone(), pos);
        }
        self.positions = positions;
        self.assignment = assignment;
        self.generation = g.generation;
        Ok(())
    }

    /// Current partition assignment, recomputed if membership changed.
    pub fn assignment(&mut self) -> Result<Vec<(String, u32)>> {
        self.refresh()?;
        Ok(self.assignment.clone())
    }

    /// Fetches up to `max` records from the assigned partitions and advances the
    /// in-memory positions past them. Per-partition order is preserved.
    pub fn poll(&mut self, max: usize, timeout: Duration) -> Result<Vec<Record>> {
        let deadline = Instant::now() + timeout;
        loop {
            let seen = self.broker.inner.appended.current();
            self.refresh()?;
            if !self.assignment.is_empty() {
                let batch = self.broker.gather(&self.assignment, self.cursor, &self.positions, max)?;
                self.cursor = (self.cursor + 1) % self.assignment.len();
                for r in &batch {
                    self.positions.insert((r.topic.clone(), r.partition), r.offset + 1);
                }
                if !batch.is_empty() {
                    return Ok(batch);
                }
            }
            if !self.broker.inner.appended.wait_past(seen, deadline) {
                return Ok(Vec::new());
            }
        }
    }

    pub fn position(&self, topic: &str, partition: u32) -> Option<u64> {
        self.positions.get(&(topic.to_string(), partition)).copied()
    }

    pub fn seek(&mut self, topic: &str, partition: u32, offset: u64) -> Result<()> {
        self.refresh()?;
        let key = (topic.to_string(), partition);
        if !self.assignment.contains(&key) {
            return Err(BrokerError::UnknownPartition {
                topic: topic.to_string(),
                partition,
            });
        }
        self.positions.insert(key, offset);
        Ok(())
    }

    /// Commits the current positions of every assigned partition.
    pub fn commit(&mut self) -> Result<()> {
        let offsets: Vec<TopicPartitionOffset> = self
            .assignment
            .iter()
            .filter_map(|tp| self.positions.get(tp).map(|&o| TopicPartitionOffset::new(&tp.0, tp.1, o)))
            .collect();
        self.broker.commit(&self.group, &offsets)
    }

    pub fn commit_offsets(&self, offsets: &[TopicPartitionOffset]) -> Result<()> {
        self.broker.commit(&self.group, offsets)
    }
}

impl Drop for Consumer {
    fn drop(&mut self) {
        self.broker.leave(&self.group, self.id);
    }
}
