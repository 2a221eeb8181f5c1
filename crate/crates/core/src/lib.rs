//! Batch side of the ideation screening pipeline: corpus ingest, text
//! preprocessing, TF-IDF style features, six classifiers, evaluation and
//! the on-disk model format consumed by the streaming engine.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod features;
pub mod preprocess;
pub mod classifiers;
pub mod clock;
pub mod evaluation;
pub mod store;
pub mod synth;
pub mod workflow;
