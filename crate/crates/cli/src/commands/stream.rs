//! Real-time phase: replay, serve, aggregate.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use ideation_broker::{Broker, BrokerOptions, Durability, TopicConfig};
use ideation_stream::aggregate::format_pct;
use ideation_stream::config::COLLECTION_KEYWORDS;
use ideation_stream::*;

use super::{finish, interrupt_flag, preprocess_config, Output};
use crate::cli::{AggregateArgs, BrokerDirArgs, ReplayArgs, ServeArgs};
use crate::manifest::Recorder;

pub fn open_broker(args: &BrokerDirArgs) -> Result<Broker> {
    let options = BrokerOptions {
        durability: if args.fsync { Durability::Fsync } else { Durability::Flush },
        ..BrokerOptions::default()
    };
    Broker::open_with(&args.broker, options).with_context(|| format!("opening log directory {}", args.broker.display()))
}

/// Broker-backed commands keep their manifest inside the log directory.
pub fn broker_manifest(args: &BrokerDirArgs, command: &str) -> PathBuf {
    args.broker.join("manifests").join(format!("{}.json", command.replace(' ', "-")))
}

fn replay_into(broker: &Broker, topic: &str, file: &Path, opts: &ReplayOptions, stop: &AtomicBool) -> Result<ReplayReport> {
    if file == Path::new("-") {
        let stdin = std::io::stdin();
        Ok(replay_reader(broker, topic, stdin.lock(), opts, stop)?)
    } else {
        Ok(replay_file(broker, topic, file, opts, stop)?)
    }
}

pub fn replay(a: &ReplayArgs, manifest: Option<&Path>) -> Result<Output> {
    let mut rec = Recorder::new("replay", a);
    if a.file != Path::new("-") {
        rec.input(&a.file)?;
    }
    let broker = open_broker(&a.broker)?;
    broker.ensure_topic(TopicConfig::new(a.topic.as_str(), 1))?;
    let stop = interrupt_flag();
    let opts = ReplayOptions {
        rate: a.rate,
        repeat: a.repeat,
        max_records: a.max_records,
    };
    let report = replay_into(&broker, &a.topic, &a.file, &opts, &stop)?;
    let text = format!(
        "produced {} records to {} ({} blank, {} malformed skipped)",
        report.produced, a.topic, report.blank, report.malformed
    );
    let json = serde_json::json!({ "topic": a.topic, "report": report });
    finish(rec, manifest, Some(broker_manifest(&a.broker, "replay")), Output::new(json, text)?)
}

fn stream_config(a: &ServeArgs) -> StreamConfig {
    let filter = if a.no_filter {
        FilterConfig::off()
    } else {
        let keywords = a
            .keywords
            .iter()
            .flat_map(|k| {
                if k == "default" {
                    COLLECTION_KEYWORDS.iter().map(|s| s.to_string()).collect()
                } else {
                    vec![k.trim().to_string()]
                }
            })
            .filter(|k| !k.is_empty())
            .collect();
        FilterConfig {
            drop_retweets: !a.keep_retweets,
            dedupe_window: a.dedupe_window,
            keywords,
            language: if a.english_only { LanguageFilter::EnglishHeuristic } else { LanguageFilter::Off },
        }
    };
    StreamConfig {
        input_topic: a.input_topic.clone(),
        output_topic: a.output_topic.clone(),
        dead_letter_topic: a.dead_letter_topic.clone(),
        group: a.group.clone(),
        micro_batch_max: a.batch_max,
        trigger_interval: Duration::from_millis(a.trigger_ms),
        filter,
        stop_when_idle: None,
        queue_depth: a.queue_depth,
        fault: a.crash_before_commit.map(|batch| Fault::CrashBeforeCommit { batch }),
    }
}

/// Stops `control` once the input is fully committed and has stayed so for `idle`.
fn idle_watch(broker: &Broker, cfg: &StreamConfig, idle: Duration, wait_for: &AtomicBool, control: &StreamControl) {
    let mut quiet_since: Option<Instant> = None;
    while !control.is_stopped() {
        std::thread::sleep(Duration::from_millis(10).min(idle));
        if !wait_for.load(Ordering::SeqCst) {
            continue;
        }
        let done = match (broker.end_offsets(&cfg.input_topic), broker.committed(&cfg.group, &cfg.input_topic)) {
            (Ok(end), Ok(committed)) => end == committed,
            _ => false,
        };
        if !done {
            quiet_since = None;
            continue;
        }
        let since = *quiet_since.get_or_insert_with(Instant::now);
        if since.elapsed() >= idle {
            log::info!("input idle for {idle:?}; stopping");
            control.stop();
        }
    }
}

fn open_feed(path: &Path) -> Result<Box<dyn Write + Send>> {
    if path == Path::new("-") {
        Ok(Box::new(std::io::stdout()))
    } else {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Box::new(BufWriter::new(f)))
    }
}

pub fn serve(a: &ServeArgs, manifest: Option<&Path>) -> Result<Output> {
    let mut rec = Recorder::new("serve", a);
    rec.input(&a.model)?;
    if let Some(p) = &a.replay {
        rec.input(p)?;
    }
    let cfg = stream_config(a);
    cfg.validate()?;
    let preprocess = preprocess_config(&a.preprocess, &mut rec)?;
    let classifier = Classifier::from_file(&a.model, preprocess)?;
    let broker = open_broker(&a.broker)?;
    ensure_topics(&broker, &cfg)?;
    let interrupted = interrupt_flag();
    let control = StreamControl::from_flag(interrupted.clone());
    let replay_done = AtomicBool::new(a.replay.is_none());
    let feed_control = StreamControl::new();
    let feed_sink = a.feed.as_deref().map(open_feed).transpose()?;

    rec.phase("stream");
    let (report, replayed, feed_result) = std::thread::scope(|s| -> Result<_> {
        let replayer = a.replay.as_ref().map(|file| {
            let (broker, topic, stop, done) = (&broker, &cfg.input_topic, &interrupted, &replay_done);
            s.spawn(move || {
                let opts = ReplayOptions {
                    rate: a.replay_rate,
                    ..ReplayOptions::default()
                };
                let r = replay_into(broker, topic, file, &opts, stop);
                done.store(true, Ordering::SeqCst);
                r
            })
        });
        if let Some(ms) = a.until_idle {
            let (broker, cfg, done, control) = (&broker, &cfg, &replay_done, &control);
            s.spawn(move || idle_watch(broker, cfg, Duration::from_millis(ms), done, control));
        }
        let feeder = match feed_sink {
            Some(mut sink) => {
                let (broker, topic, fc) = (&broker, &cfg.output_topic, &feed_control);
                Some(s.spawn(move || {
                    let opts = AggregateOptions {
                        follow: true,
                        group: "serve-feed".into(),
                        ..AggregateOptions::default()
                    };
                    aggregate(broker, topic, &opts, Some(&mut sink), fc)
                }))
            }
            None => None,
        };
        let report = run_stream(&broker, &cfg, &classifier, &control);
        // unblock helpers whatever the outcome
        control.stop();
        feed_control.stop();
        let replayed = replayer.map(|h| h.join().expect("replay thread panicked")).transpose()?;
        let feed_result = feeder.map(|h| h.join().expect("feed thread panicked"));
        Ok((report?, replayed, feed_result))
    })?;
    if let Some(r) = feed_result {
        r?;
    }

    rec.phase("summary");
    let snapshot = aggregate(
        &broker,
        &cfg.output_topic,
        &AggregateOptions::default(),
        None,
        &StreamControl::new(),
    )?;
    if let Some(p) = &a.summary {
        rec.write(p, snapshot.csv())?;
    }
    if let Some(p) = &a.feed {
        if p != Path::new("-") {
            rec.output(p);
        }
    }
    let mut text = format!(
        "{} batches, {} records consumed, {} events, {} dead letters\n",
        report.batches, report.consumed, report.events, report.dead_letters
    );
    for (reason, n) in &report.dropped {
        text.push_str(&format!("dropped {n} ({reason})\n"));
    }
    text.push_str(&format!(
        "this run: suicide {} / non-suicide {}; output topic: suicide {}% / non-suicide {}% of {}\n",
        report.suicide,
        report.non_suicide,
        format_pct(snapshot.suicide_pct),
        format_pct(snapshot.non_suicide_pct),
        snapshot.total
    ));
    if let (Some(p50), Some(p95)) = (report.latency.p50_ms, report.latency.p95_ms) {
        text.push_str(&format!("latency p50 {p50} ms, p95 {p95} ms\n"));
    }
    let json = serde_json::json!({
        "report": report,
        "replay": replayed,
        "aggregate": snapshot,
        "model_digest": classifier.model_digest(),
    });
    finish(rec, manifest, Some(broker_manifest(&a.broker, "serve")), Output::new(json, text)?)
}

pub fn aggregate_cmd(a: &AggregateArgs, manifest: Option<&Path>) -> Result<Output> {
    let mut rec = Recorder::new("aggregate", a);
    let broker = open_broker(&a.broker)?;
    let control = StreamControl::from_flag(interrupt_flag());
    let opts = AggregateOptions {
        group: a.group.clone(),
        window: a.window,
        follow: a.follow,
        ..AggregateOptions::default()
    };
    let mut feed = a.feed.as_deref().map(open_feed).transpose()?;
    let snapshot = aggregate(
        &broker,
        &a.topic,
        &opts,
        feed.as_mut().map(|f| f.as_mut() as &mut dyn Write),
        &control,
    )?;
    if let Some(p) = &a.feed {
        if p != Path::new("-") {
            rec.output(p);
        }
    }
    let text = match &a.out {
        Some(p) => {
            rec.write(p, snapshot.csv())?;
            format!(
                "suicide {}% / non-suicide {}% of {} events; wrote {}",
                format_pct(snapshot.suicide_pct),
                format_pct(snapshot.non_suicide_pct),
                snapshot.total,
                p.display()
            )
        }
        None => snapshot.csv(),
    };
    finish(rec, manifest, Some(broker_manifest(&a.broker, "aggregate")), Output::new(&snapshot, text)?)
}
