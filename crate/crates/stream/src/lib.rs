//! The real-time phase: replayed posts flow from an input topic through the
//! saved pipeline into an output topic of prediction events, which the
//! aggregator turns into class percentages.

pub mod aggregate;
pub mod config;
pub mod engine;
pub mod error;
pub mod event;
pub mod filter;
pub mod replay;

pub use aggregate::{aggregate, AggregateOptions, Aggregator, Snapshot, Window};
pub use config::{FilterConfig, Fault, LanguageFilter, StreamConfig};
pub use engine::{run_stream, Classifier, StreamControl, StreamReport};
pub use error::{Result, StreamError};
pub use event::{DeadLetter, PredictionEvent};
pub use filter::{DropReason, StreamFilter, Verdict};
pub use replay::{replay_file, replay_reader, ReplayOptions, ReplayReport};

use ideation_broker::{Broker, TopicConfig};

/// Creates the input, output and dead-letter topics (one partition each) if missing.
pub fn ensure_topics(broker: &Broker, cfg: &StreamConfig) -> Result<()> {
    for t in [&cfg.input_topic, &cfg.output_topic, &cfg.dead_letter_topic] {
        broker.ensure_topic(TopicConfig::new(t.as_str(), 1))?;
    }
    Ok(())
}
