use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ideation_core::classifiers::ModelKind;
use ideation_core::evaluation::Averaging;
use ideation_core::features::{FeatureCombo, FeatureOptions};
use ideation_stream::config::{DEFAULT_DEAD_LETTER_TOPIC, DEFAULT_GROUP, DEFAULT_INPUT_TOPIC, DEFAULT_OUTPUT_TOPIC};
use ideation_stream::Window;
use serde::Serialize;

/// Suicidal-ideation text classification: offline training and evaluation,
/// plus real-time scoring over an embedded message log.
#[derive(Debug, Parser, Serialize)]
#[command(name = "ideation", version, propagate_version = true)]
pub struct Cli {
    /// Print one machine-readable JSON object on stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    /// Where to write the run manifest, overriding the default location.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Fit a feature pipeline and classifier on a labeled CSV and save it as a .isp file.
    Train(TrainArgs),
    /// Score a saved model on a labeled CSV.
    Evaluate(EvaluateArgs),
    /// Print the JSON header of a saved model.
    Inspect(InspectArgs),
    /// Most frequent preprocessed terms of one class.
    TopTerms(TopTermsArgs),
    /// Train and score every model kind on every feature combination.
    Report(ReportArgs),
    /// Generate synthetic corpora and streaming fixtures.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Publish the lines of a text or JSONL file to the input topic.
    Replay(ReplayArgs),
    /// Run the streaming classifier between the input and output topics.
    Serve(ServeArgs),
    /// Class counts and percentages over the output topic.
    Aggregate(AggregateArgs),
    /// Manage and measure the embedded log.
    #[command(subcommand)]
    Broker(BrokerCommand),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Inspect(_) => "inspect",
            Command::TopTerms(_) => "top-terms",
            Command::Report(_) => "report",
            Command::Synth(SynthCommand::Corpus(_)) => "synth corpus",
            Command::Synth(SynthCommand::Lines(_)) => "synth lines",
            Command::Replay(_) => "replay",
            Command::Serve(_) => "serve",
            Command::Aggregate(_) => "aggregate",
            Command::Broker(BrokerCommand::CreateTopic(_)) => "broker create-topic",
            Command::Broker(BrokerCommand::EndOffsets(_)) => "broker end-offsets",
            Command::Broker(BrokerCommand::Bench(_)) => "broker bench",
            Command::Broker(BrokerCommand::Torture(_)) => "broker torture",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Labeled CSV with a header row.
    #[arg(long, value_name = "CSV")]
    pub data: PathBuf,
    #[arg(long, default_value = "text")]
    pub text_col: String,
    #[arg(long, default_value = "class")]
    pub label_col: String,
}

/// Replacement tables for the shipped preprocessing resources.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct PreprocessArgs {
    /// One stopword per line.
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
    /// `contraction<TAB>expansion` per line.
    #[arg(long, value_name = "FILE")]
    pub contractions: Option<PathBuf>,
    /// `word<TAB>lemma` per line.
    #[arg(long, value_name = "FILE")]
    pub lemma_exceptions: Option<PathBuf>,
    /// Suffix rewrite rules.
    #[arg(long, value_name = "FILE")]
    pub suffix_rules: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FeatureArgs {
    /// Keep vocabulary grams seen more than this many times in the training split.
    #[arg(long, default_value_t = FeatureOptions::default().min_tf)]
    pub min_tf: usize,
    /// Hashing bucket count for uni-tf-idf (power of two).
    #[arg(long, default_value_t = FeatureOptions::default().num_buckets)]
    pub buckets: usize,
    /// Cap the vocabulary at the most frequent grams.
    #[arg(long)]
    pub max_terms: Option<usize>,
    /// Use raw counts instead of dividing by document length.
    #[arg(long)]
    pub no_length_norm: bool,
}

impl FeatureArgs {
    pub fn options(&self) -> FeatureOptions {
        FeatureOptions {
            min_tf: self.min_tf,
            num_buckets: self.buckets,
            max_terms: self.max_terms,
            normalize_length: !self.no_length_norm,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    /// Seed for the train/test shuffle and, unless overridden, the trainer.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AveragingArg {
    Weighted,
    PositiveClass,
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::Weighted => Averaging::Weighted,
            AveragingArg::PositiveClass => Averaging::PositiveClass,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    /// uni-tf-idf, uni-cv-idf, bi-cv-idf or uni-bi-cv-idf.
    #[arg(long, default_value = "uni-cv-idf")]
    #[serde(serialize_with = "as_display")]
    pub combo: FeatureCombo,
    /// nb, lr, linear-svc, dt, rf or mlp.
    #[arg(long, default_value = "lr")]
    #[serde(serialize_with = "as_display")]
    pub model: ModelKind,
    /// Hyperparameter override, e.g. `l2=0.01` or `hidden=32x16`. Repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Hidden layer widths for mlp, e.g. `64` or `32x16`.
    #[arg(long)]
    pub hidden: Option<String>,
    /// JSON file with optional `params` (name to value) and `grid` (name to list).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// `default` for the shipped grid of the model, or `NAME=V1,V2,...`. Repeatable.
    #[arg(long, value_name = "SPEC")]
    pub grid: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Also cross-validate the final configuration on the training split.
    #[arg(long)]
    pub cv: bool,
    #[arg(long, value_enum, default_value = "weighted")]
    pub averaging: AveragingArg,
    /// Also write ROC curve points for the test split.
    #[arg(long)]
    pub roc: bool,
    /// Model file to write; metrics and reports go beside it.
    #[arg(long, short, default_value = "model.isp")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "ISP")]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[arg(long, value_enum, default_value = "weighted")]
    pub averaging: AveragingArg,
    /// Metrics CSV to write instead of printing it.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// ROC curve points CSV.
    #[arg(long, value_name = "CSV")]
    pub roc: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InspectArgs {
    #[arg(value_name = "ISP")]
    pub model: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TopTermsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    /// `suicide` or `non-suicide`.
    #[arg(long, default_value = "suicide")]
    pub class: String,
    #[arg(short, long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    /// Feature combinations to run (default: all four).
    #[arg(long, value_delimiter = ',')]
    #[serde(serialize_with = "all_display")]
    pub combos: Vec<FeatureCombo>,
    /// Model kinds to run (default: all six).
    #[arg(long, value_delimiter = ',')]
    #[serde(serialize_with = "all_display")]
    pub models: Vec<ModelKind>,
    /// Override for one model kind, e.g. `mlp:hidden=64` or `lr:l2=0.01`. Repeatable.
    #[arg(long = "param", value_name = "KIND:NAME=VALUE")]
    pub params: Vec<String>,
    #[arg(long, value_enum, default_value = "weighted")]
    pub averaging: AveragingArg,
    /// Write ROC curve points per run.
    #[arg(long)]
    pub roc: bool,
    /// Save each trained pipeline as a .isp file.
    #[arg(long)]
    pub save_models: bool,
    #[arg(long, default_value = "report")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum SynthCommand {
    /// A labeled CSV (`id,text,class`) of generated posts.
    Corpus(SynthCorpusArgs),
    /// Distinct lines of which exactly `--positives` classify positive under a model.
    Lines(SynthLinesArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthCorpusArgs {
    #[arg(long, default_value_t = 1000)]
    pub docs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub positive_fraction: f64,
    /// Chance that a content word comes from the post's class vocabulary.
    #[arg(long, default_value_t = 0.45)]
    pub signal: f64,
    #[arg(long, default_value_t = 0.03)]
    pub label_noise: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthLinesArgs {
    #[arg(long, value_name = "ISP")]
    pub model: PathBuf,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[arg(long, default_value_t = 71)]
    pub positives: usize,
    #[arg(long, default_value_t = 764)]
    pub total: usize,
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BrokerDirArgs {
    /// Log directory (created if missing).
    #[arg(long, value_name = "DIR", default_value = "ideation-log")]
    pub broker: PathBuf,
    /// fsync every append instead of flushing to the OS.
    #[arg(long)]
    pub fsync: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub broker: BrokerDirArgs,
    /// Text or JSONL file; `-` reads stdin.
    #[arg(long, value_name = "FILE")]
    pub file: PathBuf,
    #[arg(long, default_value = DEFAULT_INPUT_TOPIC)]
    pub topic: String,
    /// Records per second (0 = as fast as possible).
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    /// Loop over the file until interrupted or `--max-records` is reached.
    #[arg(long)]
    pub repeat: bool,
    #[arg(long)]
    pub max_records: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ServeArgs {
    #[command(flatten)]
    pub broker: BrokerDirArgs,
    #[arg(long, value_name = "ISP")]
    pub model: PathBuf,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    /// Replay this file into the input topic while serving.
    #[arg(long, value_name = "FILE")]
    pub replay: Option<PathBuf>,
    /// Records per second for `--replay`.
    #[arg(long, default_value_t = 0.0)]
    pub replay_rate: f64,
    /// Stop after the input has been idle this many milliseconds.
    #[arg(long, value_name = "MS")]
    pub until_idle: Option<u64>,
    /// Micro-batch trigger interval.
    #[arg(long, value_name = "MS", default_value_t = 500)]
    pub trigger_ms: u64,
    #[arg(long, default_value_t = 1024)]
    pub batch_max: usize,
    /// Keep only posts containing one of these phrases (comma separated);
    /// `default` uses the collection keywords.
    #[arg(long, value_delimiter = ',')]
    pub keywords: Vec<String>,
    /// Disable every filter.
    #[arg(long)]
    pub no_filter: bool,
    /// Keep posts starting with `RT `.
    #[arg(long)]
    pub keep_retweets: bool,
    /// Recently seen texts remembered for duplicate dropping (0 = off).
    #[arg(long, default_value_t = 10_000)]
    pub dedupe_window: usize,
    /// Drop posts that do not look like English.
    #[arg(long)]
    pub english_only: bool,
    #[arg(long, default_value = DEFAULT_INPUT_TOPIC)]
    pub input_topic: String,
    #[arg(long, default_value = DEFAULT_OUTPUT_TOPIC)]
    pub output_topic: String,
    #[arg(long, default_value = DEFAULT_DEAD_LETTER_TOPIC)]
    pub dead_letter_topic: String,
    #[arg(long, default_value = DEFAULT_GROUP)]
    pub group: String,
    #[arg(long, default_value_t = 4)]
    pub queue_depth: usize,
    /// JSONL file receiving a live aggregate snapshot after every output batch.
    #[arg(long, value_name = "FILE")]
    pub feed: Option<PathBuf>,
    /// Final class counts of the output topic as CSV.
    #[arg(long, value_name = "CSV")]
    pub summary: Option<PathBuf>,
    /// Fault injection: abort after producing batch N, before committing it.
    #[arg(long, hide = true, value_name = "N")]
    pub crash_before_commit: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub broker: BrokerDirArgs,
    #[arg(long, default_value = DEFAULT_OUTPUT_TOPIC)]
    pub topic: String,
    /// `all-time` or `sliding-N`.
    #[arg(long, default_value = "all-time")]
    #[serde(serialize_with = "as_display")]
    pub window: Window,
    /// Keep following new events until interrupted.
    #[arg(long)]
    pub follow: bool,
    /// JSONL file receiving a snapshot after every batch; `-` for stdout.
    #[arg(long, value_name = "FILE")]
    pub feed: Option<PathBuf>,
    /// Final counts as CSV.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = ideation_stream::aggregate::DEFAULT_AGGREGATE_GROUP)]
    pub group: String,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum BrokerCommand {
    CreateTopic(CreateTopicArgs),
    /// Next offset of every partition of a topic.
    EndOffsets(EndOffsetsArgs),
    /// Produce and drain synthetic records, reporting throughput.
    Bench(BenchArgs),
    /// Crash-test child: produce and consume until killed.
    #[command(hide = true)]
    Torture(TortureArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CreateTopicArgs {
    #[command(flatten)]
    pub broker: BrokerDirArgs,
    #[arg(long)]
    pub name: String,
    #[arg(long, default_value_t = 1)]
    pub partitions: u32,
    /// Records kept per partition (0 = unbounded).
    #[arg(long, default_value_t = 0)]
    pub retention: u64,
    /// Succeed if the topic already exists with the same settings.
    #[arg(long)]
    pub if_missing: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EndOffsetsArgs {
    #[command(flatten)]
    pub broker: BrokerDirArgs,
    #[arg(long)]
    pub topic: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    /// Log directory to benchmark in (default: a fresh temporary directory).
    #[arg(long, value_name = "DIR")]
    pub dir: Option<PathBuf>,
    #[arg(long, default_value_t = 200_000)]
    pub records: u64,
    #[arg(long, default_value_t = 200)]
    pub payload_bytes: usize,
    /// Records per produce call.
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value_t = 1)]
    pub partitions: u32,
    #[arg(long)]
    pub fsync: bool,
    /// Write the report as JSON here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TortureArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub start_id: u64,
}

fn as_display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn all_display<T: std::fmt::Display, S: serde::Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}
