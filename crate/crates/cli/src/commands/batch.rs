//! Offline phase: train, evaluate, inspect, top-terms, report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use ideation_core::classifiers::{ModelKind, ParamValue, TrainError, TrainerConfig};
use ideation_core::corpus::{dedupe_and_clean, split, Label, SplitSpec};
use ideation_core::evaluation::{evaluate_model, roc_curve, roc_curve_csv, top_terms as rank_terms, Evaluation, MetricsReport};
use ideation_core::features::{FeatureCombo, FeaturePipeline};
use ideation_core::store::{self, StoredPipeline};
use ideation_core::workflow::{preprocess_labeled, run_training, to_dataset, TrainRequest};
use serde::{Deserialize, Serialize};

use super::{apply_param, finish, load_labeled, parse_assignment, preprocess_config, sibling, Output};
use crate::cli::{EvaluateArgs, InspectArgs, ReportArgs, TopTermsArgs, TrainArgs};
use crate::exit::usage;
use crate::manifest::{beside, Recorder};

pub const TABLE_HEADER: &str = "feature,model,ACC,PRE,REC,F1,AUC";

pub fn table_row(combo: FeatureCombo, kind: ModelKind, m: &MetricsReport) -> String {
    format!("{},{},{}", combo.display_name(), kind.display_name(), m.csv_row())
}

/// Optional JSON file for `train --config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainConfigFile {
    #[serde(default)]
    params: BTreeMap<String, ParamValue>,
    #[serde(default)]
    grid: BTreeMap<String, Vec<ParamValue>>,
}

type Grid = BTreeMap<String, Vec<ParamValue>>;

fn resolve_trainer(a: &TrainArgs, rec: &mut Recorder) -> Result<(TrainerConfig, Option<Grid>)> {
    let mut trainer = TrainerConfig::default_for(a.model).with_seed(a.split.seed);
    let mut grid = Grid::new();
    if let Some(path) = &a.config {
        rec.input(path)?;
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: TrainConfigFile =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        for (name, value) in &file.params {
            apply_param(&mut trainer, name, value)?;
        }
        grid.extend(file.grid);
    }
    if let Some(h) = &a.hidden {
        if a.model != ModelKind::Mlp {
            return Err(usage("--hidden only applies to --model mlp"));
        }
        apply_param(&mut trainer, "hidden", &ParamValue::parse(h).map_err(usage)?)?;
    }
    for spec in &a.params {
        let (name, value) = parse_assignment(spec)?;
        apply_param(&mut trainer, &name, &value)?;
    }
    for spec in &a.grid {
        if spec == "default" {
            grid.extend(TrainerConfig::default_grid(a.model));
            continue;
        }
        let (name, values) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("grid spec must be `default` or NAME=V1,V2,..., got `{spec}`")))?;
        let values = values
            .split(',')
            .map(|v| ParamValue::parse(v).map_err(usage))
            .collect::<Result<Vec<_>>>()?;
        grid.insert(name.trim().to_string(), values);
    }
    for (name, values) in &grid {
        if values.is_empty() {
            return Err(usage(format!("grid parameter `{name}` has no values")));
        }
        let mut probe = trainer.clone();
        for v in values {
            apply_param(&mut probe, name, v)?;
        }
    }
    Ok((trainer, (!grid.is_empty()).then_some(grid)))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    model: &'a Path,
    model_digest: String,
    kind: ModelKind,
    combo: String,
    dim: usize,
    train_size: usize,
    test_size: usize,
    removed_empty: usize,
    removed_duplicates: usize,
    hyperparameters: serde_json::Value,
    metrics: MetricsReport,
    confusion: ideation_core::evaluation::ConfusionMatrix,
    cv_mean_accuracy: Option<f64>,
    cv_std_accuracy: Option<f64>,
    grid_points: Option<usize>,
}

pub fn train(a: &TrainArgs, manifest: Option<&Path>) -> Result<Output> {
    let mut rec = Recorder::new("train", a);
    rec.phase("load");
    let cfg = preprocess_config(&a.preprocess, &mut rec)?;
    let corpus = load_labeled(&a.data, &mut rec)?;
    let (trainer, grid) = resolve_trainer(a, &mut rec)?;
    rec.seed("split", a.split.seed);
    rec.seed("trainer", trainer.seed());
    let mut req = TrainRequest::new(a.combo, trainer);
    req.features = a.features.options();
    req.split = SplitSpec {
        train_fraction: a.split.train_frac,
        seed: a.split.seed,
    };
    req.grid = grid;
    req.folds = a.folds;
    req.cross_validate = a.cv;
    req.averaging = a.averaging.into();

    rec.phase("train");
    let out = run_training(corpus, &req, &cfg)?;

    rec.phase("write");
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let digest = store::save(&out.stored, &a.out)?;
    rec.output(&a.out);
    let m = out.evaluation.metrics;
    rec.write(
        &sibling(&a.out, "metrics.csv"),
        format!("{TABLE_HEADER}\n{}\n", table_row(a.combo, out.trainer.kind(), &m)),
    )?;
    if let Some(cv) = &out.cv {
        rec.write(&sibling(&a.out, "cv.csv"), cv.to_csv())?;
        rec.write(&sibling(&a.out, "cv.json"), serde_json::to_string_pretty(cv)? + "\n")?;
    }
    if let Some(g) = &out.grid {
        rec.write(&sibling(&a.out, "grid.csv"), g.to_csv())?;
    }
    if a.roc {
        let points = roc_curve(&out.evaluation.scores, &out.evaluation.gold)?;
        rec.write(&sibling(&a.out, "roc.csv"), roc_curve_csv(&points))?;
    }

    let summary = TrainSummary {
        model: &a.out,
        model_digest: digest,
        kind: out.trainer.kind(),
        combo: a.combo.to_string(),
        dim: out.stored.pipeline.dim(),
        train_size: out.train_size,
        test_size: out.test_size,
        removed_empty: out.cleanup.removed_empty,
        removed_duplicates: out.cleanup.removed_duplicates,
        hyperparameters: out.trainer.hyperparameters(),
        metrics: m,
        confusion: out.evaluation.confusion,
        cv_mean_accuracy: out.cv.as_ref().map(|c| c.mean_accuracy),
        cv_std_accuracy: out.cv.as_ref().map(|c| c.std_accuracy),
        grid_points: out.grid.as_ref().map(|g| g.runs.len()),
    };
    let mut text = format!(
        "trained {} on {} ({} train / {} test, dim {})\n{TABLE_HEADER}\n{}\n",
        out.trainer.kind().display_name(),
        a.combo.display_name(),
        out.train_size,
        out.test_size,
        summary.dim,
        table_row(a.combo, out.trainer.kind(), &m)
    );
    if let Some(cv) = &out.cv {
        let _ = writeln!(text, "{}-fold CV accuracy {:.4} ± {:.4}", cv.k, cv.mean_accuracy, cv.std_accuracy);
    }
    if let Some(g) = &out.grid {
        let _ = writeln!(text, "grid: {} points, best {:?}", g.runs.len(), g.best().0.params);
    }
    let _ = writeln!(text, "saved {}", a.out.display());
    finish(rec, manifest, Some(beside(&a.out)), Output::new(&summary, text)?)
}

fn write_or_print(rec: &mut Recorder, out: Option<&Path>, body: &str) -> Result<String> {
    match out {
        Some(p) => {
            rec.write(p, body)?;
            Ok(format!("wrote {}\n", p.display()))
        }
        None => Ok(body.to_string()),
    }
}

pub fn evaluate(a: &EvaluateArgs, manifest: Option<&Path>) -> Result<Output> {
    let mut rec = Recorder::new("evaluate", a);
    rec.phase("load");
    rec.input(&a.model)?;
    let loaded = store::load(&a.model)?;
    let cfg = preprocess_config(&a.preprocess, &mut rec)?;
    loaded.stored.check_preprocess(&cfg);
    let corpus = load_labeled(&a.data, &mut rec)?;
    rec.phase("evaluate");
    let (docs, labels) = preprocess_labeled(&corpus, &cfg);
    let data = to_dataset(&loaded.stored.pipeline, &docs, &labels);
    let ev = evaluate_model(&loaded.stored.artifact.model, &data, a.averaging.into())?;
    let header = loaded.stored.header();
    let csv = format!(
        "{TABLE_HEADER}\n{}\n",
        table_row(header.features.combo, header.model_kind, &ev.metrics)
    );
    let text = write_or_print(&mut rec, a.out.as_deref(), &csv)?;
    if let Some(p) = &a.roc {
        rec.write(p, roc_curve_csv(&roc_curve(&ev.scores, &ev.gold)?))?;
    }
    let json = serde_json::json!({
        "model": a.model,
        "model_digest": loaded.digest,
        "documents": data.len(),
        "metrics": ev.metrics,
        "confusion": ev.confusion,
    });
    let default = a.out.as_deref().map(beside);
    finish(rec, manifest, default, Output::new(json, text)?)
}

pub fn inspect(a: &InspectArgs, manifest: Option<&Path>) -> Result<Output> {
    let mut rec = Recorder::new("inspect", a);
    let bytes = std::fs::read(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    rec.input_bytes(&a.model, &bytes);
    let header = store::decode_header(&bytes)?;
    let json = serde_json::json!({
        "path": a.model,
        "bytes": bytes.len(),
        "digest": store::digest_bytes(&bytes),
        "header": header,
    });
    let text = serde_json::to_string_pretty(&json)?;
    finish(rec, manifest, None, Output::new(json, text)?)
}

pub fn top_terms(a: &TopTermsArgs, manifest: Option<&Path>) -> Result<Output> {
    let mut rec = Recorder::new("top-terms", a);
    let class: Label = a.class.parse().map_err(usage)?;
    let cfg = preprocess_config(&a.preprocess, &mut rec)?;
    let corpus = load_labeled(&a.data, &mut rec)?;
    let (docs, labels) = preprocess_labeled(&corpus, &cfg);
    let ranked = rank_terms(docs.iter().map(|d| &d.tokens).zip(labels), class, a.k)?;
    let mut csv = String::from("term,freq\n");
    for (t, c) in &ranked {
        let _ = writeln!(csv, "{t},{c}");
    }
    let text = write_or_print(&mut rec, a.out.as_deref(), &csv)?;
    let json = serde_json::json!({
        "class": class,
        "terms": ranked.iter().map(|(t, c)| serde_json::json!({"term": t, "freq": c})).collect::<Vec<_>>(),
    });
    let default = a.out.as_deref().map(beside);
    finish(rec, manifest, default, Output::new(json, text)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub combo: FeatureCombo,
    pub kind: ModelKind,
    pub hyperparameters: serde_json::Value,
    pub dim: usize,
    pub metrics: MetricsReport,
    pub confusion: ideation_core::evaluation::ConfusionMatrix,
    pub train_secs: f64,
}

type KindParams = Vec<(Option<ModelKind>, String, ParamValue)>;

fn parse_report_params(specs: &[String]) -> Result<KindParams> {
    specs
        .iter()
        .map(|spec| {
            let (kind, rest) = match spec.split_once(':') {
                Some((k, rest)) if !k.contains('=') => (Some(k.parse::<ModelKind>().map_err(usage)?), rest),
                _ => (None, spec.as_str()),
            };
            let (name, value) = parse_assignment(rest)?;
            Ok((kind, name, value))
        })
        .collect()
}

fn report_trainer(kind: ModelKind, seed: u64, params: &KindParams) -> Result<TrainerConfig> {
    let mut t = TrainerConfig::default_for(kind).with_seed(seed);
    for (k, name, value) in params {
        match k {
            Some(k) if *k == kind => apply_param(&mut t, name, value)?,
            Some(_) => {}
            // unprefixed: applies wherever the parameter exists
            None => match t.set_param(name, value) {
                Ok(()) | Err(TrainError::UnknownParameter(_)) => {}
                Err(e) => return Err(usage(format!("{kind} model: {e}"))),
            },
        }
    }
    Ok(t)
}

pub fn report(a: &ReportArgs, manifest: Option<&Path>) -> Result<Output> {
    let mut rec = Recorder::new("report", a);
    let combos = if a.combos.is_empty() { FeatureCombo::ALL.to_vec() } else { a.combos.clone() };
    let kinds = if a.models.is_empty() { ModelKind::ALL.to_vec() } else { a.models.clone() };
    let params = parse_report_params(&a.params)?;
    let trainers: Vec<TrainerConfig> = kinds
        .iter()
        .map(|&k| report_trainer(k, a.split.seed, &params))
        .collect::<Result<_>>()?;
    rec.seed("split", a.split.seed);

    rec.phase("load");
    let cfg = preprocess_config(&a.preprocess, &mut rec)?;
    let corpus = load_labeled(&a.data, &mut rec)?;
    let rows_loaded = corpus.len();
    let (clean, cleanup) = dedupe_and_clean(corpus);
    let (train_c, test_c) = split(
        &clean,
        SplitSpec {
            train_fraction: a.split.train_frac,
            seed: a.split.seed,
        },
    )?;
    rec.phase("preprocess");
    let (train_docs, train_labels) = preprocess_labeled(&train_c, &cfg);
    let (test_docs, test_labels) = preprocess_labeled(&test_c, &cfg);
    let token_lists: Vec<&[String]> = train_docs.iter().map(|d| d.tokens.as_slice()).collect();

    let averaging = a.averaging.into();
    let mut results = Vec::new();
    let mut table = format!("{TABLE_HEADER}\n");
    for &combo in &combos {
        rec.phase(&format!("features {combo}"));
        let pipeline = FeaturePipeline::fit(&token_lists, combo, &a.features.options())?;
        let train = to_dataset(&pipeline, &train_docs, &train_labels);
        let test = to_dataset(&pipeline, &test_docs, &test_labels);
        rec.phase(&format!("models {combo}"));
        let runs: Vec<Result<(RunResult, Evaluation, StoredPipeline)>> = std::thread::scope(|s| {
            let handles: Vec<_> = trainers
                .iter()
                .map(|t| {
                    let (pipeline, train, test) = (&pipeline, &train, &test);
                    let cfg = &cfg;
                    s.spawn(move || -> Result<_> {
                        let started = Instant::now();
                        let artifact = t.train(train).with_context(|| format!("training {} on {combo}", t.kind()))?;
                        let train_secs = started.elapsed().as_secs_f64();
                        let ev = evaluate_model(&artifact.model, test, averaging)?;
                        log::info!("{combo} {}: acc {:.4} in {train_secs:.1}s", t.kind(), ev.metrics.accuracy);
                        let result = RunResult {
                            combo,
                            kind: t.kind(),
                            hyperparameters: t.hyperparameters(),
                            dim: pipeline.dim(),
                            metrics: ev.metrics,
                            confusion: ev.confusion,
                            train_secs,
                        };
                        let stored = StoredPipeline::new(pipeline.clone(), artifact, cfg).with_metrics(ev.metrics);
                        Ok((result, ev, stored))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("trainer thread panicked"))))
                .collect()
        });
        for run in runs {
            let (result, ev, stored) = run?;
            let name = format!("{}_{}", result.kind, combo);
            table.push_str(&table_row(combo, result.kind, &result.metrics));
            table.push('\n');
            rec.write(&a.out_dir.join(format!("{name}.json")), serde_json::to_string_pretty(&result)? + "\n")?;
            if a.roc {
                let points = roc_curve(&ev.scores, &ev.gold)?;
                rec.write(&a.out_dir.join(format!("{name}.roc.csv")), roc_curve_csv(&points))?;
            }
            if a.save_models {
                let path = a.out_dir.join(format!("{name}.{}", store::EXTENSION));
                std::fs::create_dir_all(&a.out_dir)?;
                store::save(&stored, &path)?;
                rec.output(&path);
            }
            results.push(result);
        }
    }
    rec.write(&a.out_dir.join("table.csv"), &table)?;
    let json = serde_json::json!({
        "out_dir": a.out_dir,
        "rows_loaded": rows_loaded,
        "rows_after_cleanup": clean.len(),
        "removed_empty": cleanup.removed_empty,
        "removed_duplicates": cleanup.removed_duplicates,
        "train_size": train_c.len(),
        "test_size": test_c.len(),
        "runs": results,
    });
    let text = format!(
        "{} rows after cleanup ({} train / {} test)\n{table}wrote {}\n",
        clean.len(),
        train_c.len(),
        test_c.len(),
        a.out_dir.join("table.csv").display()
    );
    finish(rec, manifest, Some(a.out_dir.join("manifest.json")), Output::new(json, text)?)
}
