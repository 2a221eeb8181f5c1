//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Criteria 12 and 13 need the Kaggle Reddit corpus; point
//! `IDEATION_KAGGLE_CSV` at it to run them, otherwise they are skipped.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod batch;
mod broker;
mod extended;
mod streaming;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

pub type Check = Result<String, String>;

/// Fails the criterion with a formatted message unless `cond` holds.
#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
    Info(String),
}

struct Criterion {
    id: u8,
    name: &'static str,
    run: fn() -> Verdict,
}

pub fn graded(check: Check) -> Verdict {
    match check {
        Ok(d) => Verdict::Pass(d),
        Err(e) => Verdict::Fail(e),
    }
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "tf-idf matches dense oracle", run: || graded(batch::tfidf_oracle()) },
    Criterion { id: 2, name: "metrics match recount", run: || graded(batch::metrics_oracle()) },
    Criterion { id: 3, name: "auc matches pairwise count", run: || graded(batch::auc_oracle()) },
    Criterion { id: 4, name: "naive bayes hand posterior", run: || graded(batch::nb_oracle()) },
    Criterion { id: 5, name: "lr and mlp gradient checks", run: || graded(batch::gradient_checks()) },
    Criterion { id: 6, name: "trainer sanity", run: || graded(batch::trainer_sanity()) },
    Criterion { id: 7, name: "k-fold partitions and grid search", run: || graded(batch::cv_and_grid()) },
    Criterion { id: 8, name: "model store round trip", run: || graded(batch::store_round_trip()) },
    Criterion { id: 9, name: "broker ordering, conservation, crash replay", run: || graded(broker::contract()) },
    Criterion { id: 10, name: "end-to-end streaming", run: || graded(streaming::end_to_end()) },
    Criterion { id: 11, name: "broker throughput (informational)", run: broker::throughput },
    Criterion { id: 12, name: "kaggle ingest scale", run: extended::ingest_scale },
    Criterion { id: 13, name: "kaggle model ranking", run: extended::model_ranking },
];

fn main() {
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let started = Instant::now();
    let mut failed = 0;
    for c in CRITERIA {
        if !only.is_empty() && !only.contains(&c.id) {
            continue;
        }
        let t = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
            Verdict::Info(d) => ("INFO", d),
        };
        println!("{tag} {:>2} {} ({secs:.1}s): {detail}", c.id, c.name);
    }
    println!("acceptance: {failed} failed in {:.1}s", started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
