use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StreamError};

pub const DEFAULT_INPUT_TOPIC: &str = "Source-tweets";
pub const DEFAULT_OUTPUT_TOPIC: &str = "Predicted-tweets";
pub const DEFAULT_DEAD_LETTER_TOPIC: &str = "Dead-letter-tweets";
pub const DEFAULT_GROUP: &str = "stream-engine";

/// The phrases used to select posts during collection.
pub const COLLECTION_KEYWORDS: &[&str] = &["feel", "want to die", "kill myself"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LanguageFilter {
    EnglishHeuristic,
    #[default]
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub drop_retweets: bool,
    /// Recent-text LRU size; 0 disables duplicate dropping.
    pub dedupe_window: usize,
    /// Keep only texts containing one of these (case-insensitive). Empty keeps all.
    pub keywords: Vec<String>,
    pub language: LanguageFilter,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            drop_retweets: true,
            dedupe_window: 10_000,
            keywords: Vec::new(),
            language: LanguageFilter::Off,
        }
    }
}

impl FilterConfig {
    pub fn off() -> Self {
        Self {
            drop_retweets: false,
            dedupe_window: 0,
            keywords: Vec::new(),
            language: LanguageFilter::Off,
        }
    }

    pub fn is_off(&self) -> bool {
        !self.drop_retweets && self.dedupe_window == 0 && self.keywords.is_empty() && self.language == LanguageFilter::Off
    }
}

/// Simulated crash points for testing at-least-once delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// Abort after producing the outputs of batch `n` (0-based) but before committing it.
    CrashBeforeCommit { batch: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub input_topic: String,
    pub output_topic: String,
    pub dead_letter_topic: String,
    pub group: String,
    pub micro_batch_max: usize,
    #[serde(with = "millis")]
    pub trigger_interval: Duration,
    pub filter: FilterConfig,
    /// Stop once the input has been idle this long with nothing left to read.
    #[serde(with = "opt_millis")]
    pub stop_when_idle: Option<Duration>,
    /// Capacity, in batches, of each hand-off queue between stages.
    pub queue_depth: usize,
    pub fault: Option<Fault>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            input_topic: DEFAULT_INPUT_TOPIC.into(),
            output_topic: DEFAULT_OUTPUT_TOPIC.into(),
            dead_letter_topic: DEFAULT_DEAD_LETTER_TOPIC.into(),
            group: DEFAULT_GROUP.into(),
            micro_batch_max: 1024,
            trigger_interval: Duration::from_millis(500),
            filter: FilterConfig::default(),
            stop_when_idle: None,
            queue_depth: 4,
            fault: None,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trigger_interval.is_zero() {
            return Err(StreamError::Config("trigger interval must be positive".into()));
        }
        if self.micro_batch_max == 0 {
            return Err(StreamError::Config("micro batch size must be positive".into()));
        }
        if self.input_topic == self.output_topic
            || self.input_topic == self.dead_letter_topic
            || self.output_topic == self.dead_letter_topic
        {
            return Err(StreamError::Config(
                "input, output and dead-letter topics must be distinct".into(),
            ));
        }
        Ok(())
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

mod opt_millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&(d.as_millis() as u64)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<u64>::deserialize(d)?.map(Duration::from_millis))
    }
}
