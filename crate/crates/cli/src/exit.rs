//! Process exit codes.
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | other failure |
//! | 2 | usage error (bad flag or value) |
//! | 10 | CSV is missing the text or label column |
//! | 11 | corpus has no usable rows |
//! | 12 | label outside `suicide` / `non-suicide` |
//! | 13 | train/test split leaves one side empty |
//! | 20 | model file written by an unsupported format version |
//! | 21 | model file is truncated or corrupt |
//! | 30 | unknown topic |
//! | 31 | topic already exists |
//! | 32 | offset out of range |
//! | 33 | log directory locked by another process |
//! | 34 | corrupt broker data |
//! | 40 | training failed (degenerate labels, bad hyperparameter, empty vocabulary) |
//! | 41 | evaluation failed |
//! | 50 | stream engine failure |
//! | 60 | I/O error |

use ideation_broker::BrokerError;
use ideation_core::classifiers::TrainError;
use ideation_core::corpus::CorpusError;
use ideation_core::evaluation::EvalError;
use ideation_core::features::FeatureError;
use ideation_core::preprocess::ConfigError;
use ideation_core::store::StoreError;
use ideation_core::workflow::WorkflowError;
use ideation_stream::StreamError;

pub const OK: u8 = 0;
pub const OTHER: u8 = 1;
pub const USAGE: u8 = 2;
pub const MISSING_COLUMN: u8 = 10;
pub const EMPTY_CORPUS: u8 = 11;
pub const UNKNOWN_LABEL: u8 = 12;
pub const DEGENERATE_SPLIT: u8 = 13;
pub const VERSION_MISMATCH: u8 = 20;
pub const CORRUPT_PAYLOAD: u8 = 21;
pub const UNKNOWN_TOPIC: u8 = 30;
pub const TOPIC_EXISTS: u8 = 31;
pub const OFFSET_OUT_OF_RANGE: u8 = 32;
pub const BROKER_LOCKED: u8 = 33;
pub const BROKER_CORRUPT: u8 = 34;
pub const TRAIN: u8 = 40;
pub const EVAL: u8 = 41;
pub const STREAM: u8 = 50;
pub const IO: u8 = 60;

/// Marks an error as a usage problem found after argument parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn corpus(e: &CorpusError) -> u8 {
    match e {
        CorpusError::MissingColumn(_) => MISSING_COLUMN,
        CorpusError::EmptyCorpus => EMPTY_CORPUS,
        CorpusError::UnknownLabel { .. } => UNKNOWN_LABEL,
        CorpusError::DegenerateSplit { .. } => DEGENERATE_SPLIT,
        CorpusError::InvalidFraction(_) => USAGE,
        CorpusError::Csv(_) => OTHER,
        CorpusError::Io(_) => IO,
    }
}

fn store(e: &StoreError) -> u8 {
    match e {
        StoreError::VersionMismatch { .. } => VERSION_MISMATCH,
        StoreError::CorruptPayload(_) => CORRUPT_PAYLOAD,
        StoreError::Io { .. } => IO,
    }
}

fn broker(e: &BrokerError) -> u8 {
    match e {
        BrokerError::UnknownTopic(_) | BrokerError::UnknownPartition { .. } => UNKNOWN_TOPIC,
        BrokerError::TopicExists(_) => TOPIC_EXISTS,
        BrokerError::OffsetOutOfRange { .. } => OFFSET_OUT_OF_RANGE,
        BrokerError::BrokerLocked(_) => BROKER_LOCKED,
        BrokerError::Corrupt { .. } => BROKER_CORRUPT,
        BrokerError::InvalidName(_) | BrokerError::InvalidConfig(_) => USAGE,
        BrokerError::RetentionOverflow { .. } => OTHER,
        BrokerError::Io { .. } => IO,
    }
}

fn eval(e: &EvalError) -> u8 {
    match e {
        EvalError::UnknownClass(_) => EMPTY_CORPUS,
        _ => EVAL,
    }
}

/// The code for the first error in the chain that has one.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<CorpusError>() {
            return corpus(e);
        }
        if let Some(e) = cause.downcast_ref::<WorkflowError>() {
            return match e {
                WorkflowError::Corpus(c) => corpus(c),
                WorkflowError::Features(_) | WorkflowError::Train(_) => TRAIN,
                WorkflowError::Eval(e) => eval(e),
            };
        }
        if let Some(e) = cause.downcast_ref::<StoreError>() {
            return store(e);
        }
        if let Some(e) = cause.downcast_ref::<BrokerError>() {
            return broker(e);
        }
        if let Some(e) = cause.downcast_ref::<StreamError>() {
            return match e {
                StreamError::Broker(b) => broker(b),
                StreamError::Store(s) => store(s),
                StreamError::Config(_) => USAGE,
                StreamError::Io(_) => IO,
                StreamError::InjectedCrash { .. } | StreamError::StageFailed(_) => STREAM,
            };
        }
        if cause.is::<TrainError>() || cause.is::<FeatureError>() {
            return TRAIN;
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return eval(e);
        }
        if let Some(e) = cause.downcast_ref::<ConfigError>() {
            return match e {
                ConfigError::Io(_) => IO,
                ConfigError::Parse { .. } => USAGE,
            };
        }
        if cause.is::<std::io::Error>() {
            return IO;
        }
        if cause.is::<serde_json::Error>() {
            return USAGE;
        }
    }
    OTHER
}
