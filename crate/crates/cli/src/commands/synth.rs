use std::path::Path;

use anyhow::Result;
use ideation_core::synth::{engineered_lines, synth_corpus, SynthSpec};
use ideation_stream::Classifier;

use super::{finish, preprocess_config, Output};
use crate::cli::{SynthCorpusArgs, SynthLinesArgs};
use crate::exit::usage;
use crate::manifest::{beside, Recorder};

pub fn corpus(a: &SynthCorpusArgs, manifest: Option<&Path>) -> Result<Output> {
    let mut rec = Recorder::new("synth corpus", a);
    rec.seed("synth", a.seed);
    if !(0.0..=1.0).contains(&a.positive_fraction) || !(0.0..=1.0).contains(&a.signal) || !(0.0..=1.0).contains(&a.label_noise) {
        return Err(usage("fractions must lie in [0, 1]"));
    }
    let corpus = synth_corpus(&SynthSpec {
        num_docs: a.docs,
        positive_fraction: a.positive_fraction,
        signal: a.signal,
        label_noise: a.label_noise,
        seed: a.seed,
        ..SynthSpec::default()
    });
    let mut bytes = Vec::new();
    corpus.write_csv(&mut bytes)?;
    rec.write(&a.out, &bytes)?;
    let (pos, neg, _) = corpus.label_counts();
    let json = serde_json::json!({ "out": a.out, "documents": corpus.len(), "suicide": pos, "non_suicide": neg });
    let text = format!("wrote {} posts ({pos} suicide, {neg} non-suicide) to {}", corpus.len(), a.out.display());
    finish(rec, manifest, Some(beside(&a.out)), Output::new(json, text)?)
}

pub fn lines(a: &SynthLinesArgs, manifest: Option<&Path>) -> Result<Output> {
    let mut rec = Recorder::new("synth lines", a);
    rec.seed("synth", a.seed);
    rec.input(&a.model)?;
    let cfg = preprocess_config(&a.preprocess, &mut rec)?;
    let classifier = Classifier::from_file(&a.model, cfg)?;
    let lines = engineered_lines(
        |t| classifier.classify(t).map(|p| p.label).unwrap_or(u8::MAX),
        a.positives,
        a.total,
        a.seed,
    )
    .map_err(usage)?;
    let mut body = lines.join("\n");
    body.push('\n');
    rec.write(&a.out, body)?;
    let json = serde_json::json!({ "out": a.out, "lines": lines.len(), "positives": a.positives });
    let text = format!("wrote {} lines ({} classify positive) to {}", lines.len(), a.positives, a.out.display());
    finish(rec, manifest, Some(beside(&a.out)), Output::new(json, text)?)
}
