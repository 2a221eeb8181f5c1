//! Checks against the Kaggle Reddit corpus (columns `text` and `class`).
//!
//! `IDEATION_KAGGLE_CSV` names the file. `IDEATION_KAGGLE_REPORT_ARGS` is split
//! on whitespace and appended to the `report` invocation, e.g. `--param mlp:epochs=30`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::Command;

use ideation_core::corpus::{dedupe_and_clean, load_csv, split, SplitSpec};

use crate::{ensure, graded, Check, Verdict};

const CSV_ENV: &str = "IDEATION_KAGGLE_CSV";
const ARGS_ENV: &str = "IDEATION_KAGGLE_REPORT_ARGS";

fn corpus_path() -> Option<PathBuf> {
    std::env::var_os(CSV_ENV).map(PathBuf::from).filter(|p| p.is_file())
}

fn skipped() -> Verdict {
    Verdict::Skip(format!("{CSV_ENV} not set or not a file"))
}

pub fn ingest_scale() -> Verdict {
    match corpus_path() {
        Some(p) => graded(check_ingest(p)),
        None => skipped(),
    }
}

fn check_ingest(path: PathBuf) -> Check {
    let (corpus, load) = load_csv(&path, "text", Some("class")).map_err(|e| e.to_string())?;
    let read = load.rows_read;
    let (clean, cleanup) = dedupe_and_clean(corpus);
    let (train, test) = split(&clean, SplitSpec::default()).map_err(|e| e.to_string())?;
    let detail = format!(
        "{read} read, {} after cleanup ({} empty, {} duplicates removed), split {}/{}",
        clean.len(),
        cleanup.removed_empty,
        cleanup.removed_duplicates,
        train.len(),
        test.len()
    );
    ensure!(clean.len() == 232_042, "{detail}; want 232042 after cleanup");
    ensure!(
        train.len().abs_diff(185_430) <= 1 && test.len().abs_diff(46_612) <= 1,
        "{detail}; want 185430/46612 +-1"
    );
    Ok(detail)
}

pub fn model_ranking() -> Verdict {
    match corpus_path() {
        Some(p) => graded(check_ranking(p)),
        None => skipped(),
    }
}

fn check_ranking(path: PathBuf) -> Check {
    let out_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let extra: Vec<String> = std::env::var(ARGS_ENV)
        .unwrap_or_default()
        .split_whitespace()
        .map(String::from)
        .collect();
    let output = Command::new(env!("CARGO_BIN_EXE_ideation"))
        .args(["--json", "-q", "report", "--data"])
        .arg(&path)
        .args(["--combos", "uni-cv-idf,bi-cv-idf,uni-bi-cv-idf", "--out-dir"])
        .arg(out_dir.path())
        .args(&extra)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        output.status.success(),
        "report failed: {}",
        String::from_utf8_lossy(&output.stderr).trim()
    );
    let json: serde_json::Value = serde_json::from_slice(&output.stdout).map_err(|e| e.to_string())?;
    let mut table: HashMap<(String, String), (f64, Option<f64>)> = HashMap::new();
    for run in json["runs"].as_array().ok_or("report has no runs")? {
        let key = (
            run["combo"].as_str().unwrap_or_default().to_string(),
            run["kind"].as_str().unwrap_or_default().to_string(),
        );
        let m = &run["metrics"];
        table.insert(key, (m["accuracy"].as_f64().unwrap_or(f64::NAN), m["auc"].as_f64()));
    }
    let get = |combo: &str, kind: &str| -> Result<(f64, Option<f64>), String> {
        table
            .get(&(combo.to_string(), kind.to_string()))
            .copied()
            .ok_or_else(|| format!("no run for {kind} on {combo}"))
    };

    let mut problems = Vec::new();
    let lr_uni = get("uni-cv-idf", "lr")?.0;
    if lr_uni < 0.88 {
        problems.push(format!("lr uni-cv-idf acc {lr_uni:.4} < 0.88"));
    }
    let (mlp_acc, mlp_auc) = get("uni-bi-cv-idf", "mlp")?;
    if mlp_acc < 0.90 {
        problems.push(format!("mlp uni-bi acc {mlp_acc:.4} < 0.90"));
    }
    match mlp_auc {
        Some(a) if a >= 0.95 => {}
        other => problems.push(format!("mlp uni-bi auc {other:?} < 0.95")),
    }
    for kind in ["nb", "lr", "linear-svc", "dt", "rf", "mlp"] {
        let (bi, both) = (get("bi-cv-idf", kind)?.0, get("uni-bi-cv-idf", kind)?.0);
        if bi >= both {
            problems.push(format!("{kind}: bigram {bi:.4} >= uni+bi {both:.4}"));
        }
    }
    let (lr_both, nb_both) = (get("uni-bi-cv-idf", "lr")?.0, get("uni-bi-cv-idf", "nb")?.0);
    if !(mlp_acc >= lr_both && lr_both >= nb_both) {
        problems.push(format!("ranking mlp {mlp_acc:.4} / lr {lr_both:.4} / nb {nb_both:.4}"));
    }
    ensure!(problems.is_empty(), "{}", problems.join("; "));
    Ok(format!(
        "lr uni {lr_uni:.4}; mlp uni-bi {mlp_acc:.4} auc {:.4}; bigram below uni+bi for all six",
        mlp_auc.unwrap_or(f64::NAN)
    ))
}
