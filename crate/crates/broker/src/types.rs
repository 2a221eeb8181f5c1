use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{BrokerError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub topic: String,
    pub partition: u32,
    pub offset: u64,
    pub key: Option<Vec<u8>>,
    pub payload: Vec<u8>,
    /// Milliseconds since the Unix epoch, set by the broker on append.
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicConfig {
    pub name: String,
    pub partitions: u32,
    /// Maximum retained records per partition; 0 means unbounded.
    #[serde(default)]
    pub retention: u64,
}

impl TopicConfig {
    pub fn new(name: impl Into<String>, partitions: u32) -> Self {
        Self {
            name: name.into(),
            partitions,
            retention: 0,
        }
    }

    pub fn with_retention(mut self, retention: u64) -> Self {
        self.retention = retention;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        validate_name(&self.name)?;
        if self.partitions == 0 {
            return Err(BrokerError::InvalidConfig("a topic needs at least one partition".into()));
        }
        Ok(())
    }
}

/// How far an append travels before the producer is acknowledged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Durability {
    /// Written to the OS; survives a process kill but not a power loss.
    #[default]
    Flush,
    /// `fdatasync` after every append call.
    Fsync,
}

/// What a producer does when a bounded partition is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverflowPolicy {
    #[default]
    Error,
    Block(Duration),
}

pub const DEFAULT_SEGMENT_BYTES: u64 = 16 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BrokerOptions {
    pub durability: Durability,
    pub segment_bytes: u64,
    pub overflow: OverflowPolicy,
}

impl Default for BrokerOptions {
    fn default() -> Self {
        Self {
            durability: Durability::Flush,
            segment_bytes: DEFAULT_SEGMENT_BYTES,
            overflow: OverflowPolicy::Error,
        }
    }
}

/// A committed position: the next offset the group will read.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TopicPartitionOffset {
    pub topic: String,
    pub partition: u32,
    pub offset: u64,
}

impl TopicPartitionOffset {
    pub fn new(topic: impl Into<String>, partition: u32, offset: u64) -> Self {
        Self {
            topic: topic.into(),
            partition,
            offset,
        }
    }
}

/// Topic and group names double as file names.
pub fn validate_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name.len() <= 200
        && name != "."
        && name != ".."
        && name.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(BrokerError::InvalidName(name.to_string()))
    }
}

/// 32-bit FNV-1a; `partition_for_key` is this value modulo the partition count.
pub fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

pub fn partition_for_key(key: &[u8], partitions: u32) -> u32 {
    fnv1a(key) % partitions
}

pub(crate) fn now_ms() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}
