//! Embedded commit log: topics split into partitions, each an append-only
//! sequence of records with gapless offsets, plus consumer groups whose
//! committed offsets survive restarts. Delivery is at-least-once.

mod broker;
mod error;
mod fsutil;
mod log;
mod types;

pub mod bench;
pub mod torture;

pub use broker::{range_assign, Broker, Consumer};
pub use error::{BrokerError, Result};
pub use types::{
    fnv1a, partition_for_key, validate_name, BrokerOptions, Durability, OverflowPolicy, Record, TopicConfig,
    TopicPartitionOffset, DEFAULT_SEGMENT_BYTES,
};
