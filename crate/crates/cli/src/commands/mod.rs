mod batch;
mod broker;
mod stream;
mod synth;

use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use anyhow::{Context, Result};
use ideation_core::classifiers::{ParamValue, TrainerConfig};
use ideation_core::corpus::{parse_csv, Corpus};
use ideation_core::preprocess::PreprocessConfig;
use serde::Serialize;

use crate::cli::{BrokerCommand, Cli, Command, DataArgs, PreprocessArgs, SynthCommand};
use crate::exit::usage;
use crate::manifest::{Recorder, RunManifest};

/// What a command hands back for printing.
pub struct Output {
    pub json: serde_json::Value,
    pub text: String,
}

impl Output {
    pub fn new(json: impl Serialize, text: impl Into<String>) -> Result<Self> {
        Ok(Self {
            json: serde_json::to_value(json)?,
            text: text.into(),
        })
    }
}

pub fn run(cli: &Cli) -> Result<Output> {
    let m = cli.manifest.as_deref();
    match &cli.command {
        Command::Train(a) => batch::train(a, m),
        Command::Evaluate(a) => batch::evaluate(a, m),
        Command::Inspect(a) => batch::inspect(a, m),
        Command::TopTerms(a) => batch::top_terms(a, m),
        Command::Report(a) => batch::report(a, m),
        Command::Synth(SynthCommand::Corpus(a)) => synth::corpus(a, m),
        Command::Synth(SynthCommand::Lines(a)) => synth::lines(a, m),
        Command::Replay(a) => stream::replay(a, m),
        Command::Serve(a) => stream::serve(a, m),
        Command::Aggregate(a) => stream::aggregate_cmd(a, m),
        Command::Broker(BrokerCommand::CreateTopic(a)) => broker::create_topic(a, m),
        Command::Broker(BrokerCommand::EndOffsets(a)) => broker::end_offsets(a, m),
        Command::Broker(BrokerCommand::Bench(a)) => broker::bench(a, m),
        Command::Broker(BrokerCommand::Torture(a)) => broker::torture(a),
    }
}

/// Finishes the manifest at `explicit`, else at `default`, and attaches its path to the output.
pub fn finish(rec: Recorder, explicit: Option<&Path>, default: Option<PathBuf>, mut out: Output) -> Result<Output> {
    let target = explicit.map(Path::to_path_buf).or(default);
    let (_, path): (RunManifest, _) = rec.finish(target.as_deref())?;
    if let (Some(p), serde_json::Value::Object(map)) = (path, &mut out.json) {
        map.insert("manifest".into(), serde_json::json!(p));
    }
    Ok(out)
}

pub fn preprocess_config(args: &PreprocessArgs, rec: &mut Recorder) -> Result<PreprocessConfig> {
    let files = [&args.stopwords, &args.contractions, &args.lemma_exceptions, &args.suffix_rules];
    for p in files.into_iter().flatten() {
        rec.input(p)?;
    }
    Ok(PreprocessConfig::english().with_files(
        args.stopwords.as_deref(),
        args.contractions.as_deref(),
        args.lemma_exceptions.as_deref(),
        args.suffix_rules.as_deref(),
    )?)
}

pub fn load_labeled(data: &DataArgs, rec: &mut Recorder) -> Result<Corpus> {
    let bytes = std::fs::read(&data.data).with_context(|| format!("reading {}", data.data.display()))?;
    rec.input_bytes(&data.data, &bytes);
    let (corpus, report) = parse_csv(&bytes, &data.text_col, Some(&data.label_col))
        .with_context(|| format!("loading {}", data.data.display()))?;
    log::info!(
        "{}: {} rows read, {} empty, {} malformed",
        data.data.display(),
        report.rows_read,
        report.dropped_empty,
        report.malformed
    );
    Ok(corpus)
}

/// Splits `NAME=VALUE`.
pub fn parse_assignment(spec: &str) -> Result<(String, ParamValue)> {
    let (name, value) = spec
        .split_once('=')
        .ok_or_else(|| usage(format!("expected NAME=VALUE, got `{spec}`")))?;
    let value = ParamValue::parse(value).map_err(usage)?;
    Ok((name.trim().to_string(), value))
}

pub fn apply_param(trainer: &mut TrainerConfig, name: &str, value: &ParamValue) -> Result<()> {
    trainer
        .set_param(name, value)
        .map_err(|e| usage(format!("{} model: {e}", trainer.kind())))
}

/// Stop flag flipped by the first interrupt; a second interrupt exits at once.
pub fn interrupt_flag() -> Arc<AtomicBool> {
    use std::sync::atomic::Ordering;
    let flag = Arc::new(AtomicBool::new(false));
    let handler_flag = flag.clone();
    let installed = ctrlc::set_handler(move || {
        if handler_flag.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
        eprintln!("interrupt: finishing in-flight work (press again to abort)");
    });
    if let Err(e) = installed {
        log::warn!("could not install interrupt handler: {e}");
    }
    flag
}

/// `path` with its extension replaced by `suffix` (which may contain dots).
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}
