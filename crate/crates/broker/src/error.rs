use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("topic `{0}` already exists")]
    TopicExists(String),
    #[error("topic `{topic}` has no partition {partition}")]
    UnknownPartition { topic: String, partition: u32 },
    #[error("invalid name `{0}` (1-200 chars of [A-Za-z0-9._-], not `.` or `..`)")]
    InvalidName(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("partition {topic}/{partition} is at its retention limit of {limit} records")]
    RetentionOverflow { topic: String, partition: u32, limit: u64 },
    #[error("offset {offset} outside [{start}, {end}] for {topic}/{partition}")]
    OffsetOutOfRange {
        topic: String,
        partition: u32,
        offset: u64,
        start: u64,
        end: u64,
    },
    #[error("log directory {0} is locked by another broker")]
    BrokerLocked(PathBuf),
    #[error("corrupt log data in {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = BrokerError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BrokerError {
    let path = path.into();
    move |source| BrokerError::Io { path, source }
}
