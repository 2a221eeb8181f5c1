use serde::{Deserialize, Serialize};

/// One line of the output topic.
///
/// | field | meaning |
/// |---|---|
/// | `source_partition`, `source_offset` | position of the input record |
/// | `text_digest` | SHA-256 (hex) of the input text |
/// | `label` | 1 = suicide, 0 = non-suicide |
/// | `class` | `"suicide"` or `"non-suicide"` |
/// | `score` | model score behind the label |
/// | `model_digest` | SHA-256 (hex) of the `.isp` file that produced it |
/// | `processed_at` | milliseconds since the Unix epoch |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEvent {
    pub source_partition: u32,
    pub source_offset: u64,
    pub text_digest: String,
    pub label: u8,
    pub class: String,
    pub score: f64,
    pub model_digest: String,
    pub processed_at: i64,
}

/// Written to the dead-letter topic when a record cannot be classified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadLetter {
    pub source_partition: u32,
    pub source_offset: u64,
    pub error: String,
    /// The payload, lossily decoded.
    pub payload: String,
    pub processed_at: i64,
}

impl PredictionEvent {
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("event serializes")
    }

    pub fn from_json(bytes: &[u8]) -> serde_json::Result<Self> {
        serde_json::from_slice(bytes)
    }
}

pub(crate) fn now_ms() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}
