use std::collections::{BTreeMap, BTreeSet};

use ideation_core::classifiers::*;
use ideation_core::evaluation::{confusion, metrics, roc_auc, Averaging, ConfusionMatrix};
use ideation_core::features::{hash_bucket, FeatureCombo, FeatureOptions, FeaturePipeline, SparseVector, TermMapping};
use ideation_core::preprocess::PreprocessConfig;
use ideation_core::store::{self, StoreError};
use ideation_core::synth::{synth_corpus, SynthSpec};
use ideation_core::workflow::{predict_text, run_training, TrainRequest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Check};

fn grams(doc: &[String], combo: FeatureCombo) -> Vec<String> {
    let (uni, bi) = match combo {
        FeatureCombo::UniTfIdf | FeatureCombo::UniCvIdf => (true, false),
        FeatureCombo::BiCvIdf => (false, true),
        FeatureCombo::UniBiCvIdf => (true, true),
    };
    let mut out = Vec::new();
    if uni {
        out.extend(doc.iter().cloned());
    }
    if bi {
        out.extend(doc.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    }
    out
}

/// tf = count / grams in doc (or raw count), idf = ln((N + 1) / (df + 1)).
fn dense_tfidf(docs: &[Vec<String>], combo: FeatureCombo, col: &dyn Fn(&str) -> Option<usize>, dim: usize, norm: bool) -> Vec<Vec<f64>> {
    let doc_grams: Vec<Vec<String>> = docs.iter().map(|d| grams(d, combo)).collect();
    let mut counts = vec![vec![0.0; dim]; docs.len()];
    for (row, gs) in doc_grams.iter().enumerate() {
        for g in gs {
            if let Some(c) = col(g) {
                counts[row][c] += 1.0;
            }
        }
    }
    let mut df = vec![0.0; dim];
    for row in &counts {
        for (c, v) in row.iter().enumerate() {
            if *v > 0.0 {
                df[c] += 1.0;
            }
        }
    }
    let n = docs.len() as f64;
    counts
        .iter()
        .zip(&doc_grams)
        .map(|(row, gs)| {
            let total = gs.len() as f64;
            row.iter()
                .enumerate()
                .map(|(c, &k)| {
                    let tf = if norm && total > 0.0 { k / total } else { k };
                    tf * ((n + 1.0) / (df[c] + 1.0)).ln()
                })
                .collect()
        })
        .collect()
}

pub fn tfidf_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut corpora, mut cells, mut worst) = (0, 0usize, 0.0f64);
    while corpora < 50 {
        let vocab = rng.gen_range(1..=200);
        let docs: Vec<Vec<String>> = (0..rng.gen_range(1..=30))
            .map(|_| (0..rng.gen_range(0..=25)).map(|_| format!("t{}", rng.gen_range(0..vocab))).collect())
            .collect();
        let combo = FeatureCombo::ALL[rng.gen_range(0..4)];
        let norm = rng.gen_bool(0.5);
        let opts = FeatureOptions {
            min_tf: rng.gen_range(0..2),
            num_buckets: 1 << rng.gen_range(4..10),
            max_terms: None,
            normalize_length: norm,
        };
        let Ok(pipeline) = FeaturePipeline::fit(&docs, combo, &opts) else {
            continue;
        };
        let dim = pipeline.dim();
        let want = match pipeline.mapping() {
            TermMapping::Vocabulary(v) => dense_tfidf(&docs, combo, &|g| v.index_of(g), dim, norm),
            TermMapping::Hashing { num_buckets } => {
                let b = *num_buckets;
                dense_tfidf(&docs, combo, &move |g| Some(hash_bucket(g, b)), dim, norm)
            }
        };
        for (doc, w) in docs.iter().zip(&want) {
            let got = pipeline.transform(doc).to_dense();
            ensure!(got.len() == w.len(), "{combo}: dim {} vs {}", got.len(), w.len());
            for (g, e) in got.iter().zip(w) {
                worst = worst.max((g - e).abs());
                cells += 1;
            }
        }
        corpora += 1;
    }
    ensure!(worst <= 1e-9, "max cell error {worst:e}");
    Ok(format!("50 corpora, {cells} cells, max error {worst:.1e}"))
}

fn recount(cm: &ConfusionMatrix, avg: Averaging) -> [f64; 4] {
    let mut pairs = Vec::new();
    for (n, p, g) in [(cm.tp, 1u8, 1u8), (cm.fp, 1, 0), (cm.fn_, 0, 1), (cm.tn, 0, 0)] {
        pairs.extend(std::iter::repeat_n((p, g), n as usize));
    }
    let n = pairs.len() as f64;
    let class = |c: u8| {
        let predicted = pairs.iter().filter(|x| x.0 == c).count() as f64;
        let actual = pairs.iter().filter(|x| x.1 == c).count() as f64;
        let hit = pairs.iter().filter(|x| x.0 == c && x.1 == c).count() as f64;
        let p = if predicted > 0.0 { hit / predicted } else { 0.0 };
        let r = if actual > 0.0 { hit / actual } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        [p, r, f, actual]
    };
    let acc = pairs.iter().filter(|x| x.0 == x.1).count() as f64 / n;
    let [p, r, f] = match avg {
        Averaging::PositiveClass => {
            let c = class(1);
            [c[0], c[1], c[2]]
        }
        Averaging::Weighted => {
            let (a, b) = (class(1), class(0));
            let (wa, wb) = (a[3] / n, b[3] / n);
            [wa * a[0] + wb * b[0], wa * a[1] + wb * b[1], wa * a[2] + wb * b[2]]
        }
    };
    [acc, p, r, f]
}

pub fn metrics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    while checked < 200 {
        let cm = ConfusionMatrix {
            tp: rng.gen_range(0..50),
            fp: rng.gen_range(0..50),
            fn_: rng.gen_range(0..50),
            tn: rng.gen_range(0..50),
        };
        if cm.total() == 0 {
            continue;
        }
        for avg in [Averaging::PositiveClass, Averaging::Weighted] {
            let m = metrics(&cm, avg).map_err(|e| e.to_string())?;
            let got = [m.accuracy, m.precision, m.recall, m.f1];
            ensure!(got == recount(&cm, avg), "{cm:?} {avg:?}: {got:?} vs {:?}", recount(&cm, avg));
        }
        checked += 1;
    }
    let cm = confusion(&[1, 1, 1, 1, 0, 0, 0, 0, 0, 0], &[1, 1, 1, 0, 1, 0, 0, 0, 0, 0]).map_err(|e| e.to_string())?;
    ensure!((cm.tp, cm.fp, cm.fn_, cm.tn) == (3, 1, 1, 5), "fixture confusion {cm:?}");
    let m = metrics(&cm, Averaging::PositiveClass).map_err(|e| e.to_string())?;
    ensure!(
        (m.accuracy, m.precision, m.recall, m.f1) == (0.8, 0.75, 0.75, 0.75),
        "fixture metrics {m:?}"
    );
    Ok("200 matrices exact; (3,1,1,5) gives 0.8/0.75/0.75/0.75".into())
}

fn pairwise_auc(scores: &[f64], gold: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &gi) in gold.iter().enumerate() {
        for (j, &gj) in gold.iter().enumerate() {
            if gi == 1 && gj == 0 {
                pairs += 1.0;
                num += match scores[i].partial_cmp(&scores[j]) {
                    Some(std::cmp::Ordering::Greater) => 1.0,
                    Some(std::cmp::Ordering::Equal) => 0.5,
                    _ => 0.0,
                };
            }
        }
    }
    num / pairs
}

pub fn auc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut sets, mut worst) = (0, 0.0f64);
    while sets < 100 {
        let n = rng.gen_range(2..=500);
        let levels = rng.gen_range(2..40);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let gold: Vec<u8> = scores.iter().map(|s| u8::from(rng.gen_bool(0.15 + 0.7 * s))).collect();
        if !(gold.contains(&0) && gold.contains(&1)) {
            continue;
        }
        let fast = roc_auc(&scores, &gold).map_err(|e| e.to_string())?;
        worst = worst.max((fast - pairwise_auc(&scores, &gold)).abs());
        for f in [|s: f64| (3.0 * s).exp(), |s: f64| s.powi(3) - 7.0, |s: f64| 0.01 * s + 2.0] {
            let moved: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
            let m = roc_auc(&moved, &gold).map_err(|e| e.to_string())?;
            ensure!(m == fast, "monotone transform moved auc {fast} -> {m}");
        }
        sets += 1;
    }
    ensure!(worst <= 1e-12, "max auc error {worst:e}");
    let fixture = roc_auc(&[0.9, 0.8, 0.3, 0.2], &[1, 0, 1, 0]).map_err(|e| e.to_string())?;
    ensure!(fixture == 0.75, "fixture auc {fixture}");
    Ok(format!("100 sets, max error {worst:.1e}; fixture 0.75; monotone invariant"))
}

pub fn nb_oracle() -> Check {
    // columns: die, sad, game
    let data = LabeledDataset::from_dense(&[
        (vec![2.0, 1.0, 0.0], 1),
        (vec![1.0, 1.0, 0.0], 1),
        (vec![0.0, 1.0, 2.0], 0),
        (vec![0.0, 0.0, 1.0], 0),
    ])
    .map_err(|e| e.to_string())?;
    let nb = train_nb(&data, &NbParams { alpha: 1.0 }).map_err(|e| e.to_string())?;
    // Laplace: P(t|1) = 4/8, 3/8, 1/8 and P(t|0) = 1/7, 2/7, 4/7, equal priors
    let j1 = 0.5 * (4.0 / 8.0) * (3.0 / 8.0) * (1.0 / 8.0);
    let j0 = 0.5 * (1.0 / 7.0) * (2.0 / 7.0) * (4.0 / 7.0);
    let post = nb.posteriors(&SparseVector::from_dense(&[1.0, 1.0, 1.0]));
    let err = (post[1] - j1 / (j0 + j1)).abs();
    ensure!(err < 1e-12, "posterior {} vs hand {}", post[1], j1 / (j0 + j1));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..4.0)).collect();
        let p = nb.posteriors(&SparseVector::from_dense(&x));
        ensure!((p[0] + p[1] - 1.0).abs() < 1e-12, "posteriors {p:?} do not sum to 1");
    }
    Ok(format!("posterior {:.6}, error {err:.1e}", post[1]))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, dim: usize, lo: f64, hi: f64) -> LabeledDataset {
    loop {
        let rows: Vec<(Vec<f64>, u8)> = (0..n)
            .map(|_| ((0..dim).map(|_| rng.gen_range(lo..hi)).collect(), rng.gen_range(0..2)))
            .collect();
        let d = LabeledDataset::from_dense(&rows).expect("dense rows");
        if d.positives() > 0 && d.positives() < n {
            return d;
        }
    }
}

pub fn gradient_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    let (mut lr_worst, mut mlp_worst, mut mlp_checked) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..20 {
        let dim = rng.gen_range(1..8);
        let n = rng.gen_range(3..20);
        let data = random_data(&mut rng, n, dim, -2.0, 2.0);
        let l2 = rng.gen_range(0.0..1.0);
        let theta: Vec<f64> = (0..=dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let (_, grad) = logistic_objective(&theta, &data, l2);
        for i in 0..theta.len() {
            let (mut up, mut down) = (theta.clone(), theta.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (logistic_objective(&up, &data, l2).0 - logistic_objective(&down, &data, l2).0) / (2.0 * h);
            lr_worst = lr_worst.max(rel_err(fd, grad[i]));
        }
    }
    for _ in 0..20 {
        let hidden: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(1..=5)).collect();
        let n = rng.gen_range(2..8);
        let data = random_data(&mut rng, n, 4, 0.0, 1.5);
        let mut net = Mlp::new(4, &hidden, rng.gen()).map_err(|e| e.to_string())?;
        let theta = net.flat_params();
        let (_, grad) = net.loss_and_gradient(data.rows());
        for i in 0..theta.len() {
            let mut t = theta.clone();
            t[i] = theta[i] + h;
            net.set_flat_params(&t);
            let up = net.loss(data.rows());
            t[i] = theta[i] - h;
            net.set_flat_params(&t);
            let down = net.loss(data.rows());
            let fd = (up - down) / (2.0 * h);
            // dead ReLU units give zero on both sides
            if fd.abs().max(grad[i].abs()) > 1e-8 {
                mlp_worst = mlp_worst.max(rel_err(fd, grad[i]));
                mlp_checked += 1;
            }
        }
        net.set_flat_params(&theta);
    }
    ensure!(lr_worst < 1e-6, "lr relative error {lr_worst:e}");
    ensure!(mlp_worst < 1e-4, "mlp relative error {mlp_worst:e}");
    ensure!(mlp_checked > 100, "only {mlp_checked} live mlp parameters checked");
    Ok(format!("20+20 configs, lr {lr_worst:.1e}, mlp {mlp_worst:.1e} over {mlp_checked} live parameters"))
}

fn separable() -> LabeledDataset {
    let mut rows = Vec::new();
    for i in 0..12 {
        let t = i as f64 * 0.25;
        rows.push((vec![3.0 + t, 0.5 + 0.1 * t], 1));
        rows.push((vec![0.5 + 0.1 * t, 3.0 + t], 0));
    }
    LabeledDataset::from_dense(&rows).expect("dense rows")
}

fn xor() -> LabeledDataset {
    LabeledDataset::from_dense(&[
        (vec![0.0, 0.0], 0),
        (vec![0.0, 1.0], 1),
        (vec![1.0, 0.0], 1),
        (vec![1.0, 1.0], 0),
    ])
    .expect("dense rows")
}

fn train_acc(model: Model, data: &LabeledDataset) -> Result<f64, String> {
    let preds = model.predict_batch(data).map_err(|e| e.to_string())?;
    let hits = preds.iter().zip(data.rows()).filter(|(p, r)| p.label == r.label).count();
    Ok(hits as f64 / data.len() as f64)
}

pub fn trainer_sanity() -> Check {
    let sep = separable();
    let (lr, _) = train_lr(&sep, &LrParams { l2: 0.0, ..LrParams::default() }).map_err(|e| e.to_string())?;
    let lr_acc = train_acc(Model::Logistic(lr), &sep)?;
    let (svc, _) = train_linear_svc(&sep, &SvcParams::default()).map_err(|e| e.to_string())?;
    let svc_acc = train_acc(Model::LinearSvc(svc), &sep)?;
    let params = MlpParams {
        hidden: vec![4],
        learning_rate: 2.0,
        epochs: 5000,
        batch_size: 4,
        seed: 42,
    };
    let (net, conv) = train_mlp(&xor(), &params).map_err(|e| e.to_string())?;
    let mlp_acc = train_acc(Model::Mlp(net), &xor())?;
    let tree = train_dt(&xor(), &DtParams { max_depth: 2, ..DtParams::default() }).map_err(|e| e.to_string())?;
    let dt_acc = train_acc(Model::DecisionTree(tree), &xor())?;
    ensure!(lr_acc == 1.0 && svc_acc == 1.0, "separable: lr {lr_acc}, svc {svc_acc}");
    ensure!(mlp_acc == 1.0 && conv.iterations <= 5000, "xor mlp {mlp_acc} after {} epochs", conv.iterations);
    ensure!(dt_acc == 1.0, "xor depth-2 tree {dt_acc}");
    Ok(format!("lr/svc separable 100%; mlp xor 100% in {} epochs; dt xor 100%", conv.iterations))
}

/// Mostly negative rows; one optimizer step only learns the bias.
fn dominance_fixture() -> LabeledDataset {
    let mut rows = Vec::new();
    for i in 0..36 {
        rows.push((vec![0.2 + 0.01 * i as f64, 1.0], 0));
    }
    for i in 0..4 {
        rows.push((vec![1.5 + 0.05 * i as f64, 1.0], 1));
    }
    LabeledDataset::from_dense(&rows).expect("dense rows")
}

pub fn cv_and_grid() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let n = rng.gen_range(10..600);
        let folds = fold_indices(n, 10, rng.gen()).map_err(|e| e.to_string())?;
        ensure!(folds.len() == 10, "{} folds", folds.len());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        let spread = sizes.iter().max().unwrap_or(&0) - sizes.iter().min().unwrap_or(&0);
        ensure!(spread <= 1, "n {n}: sizes {sizes:?}");
        let mut seen = BTreeSet::new();
        for &i in folds.iter().flatten() {
            ensure!(seen.insert(i), "n {n}: index {i} in two folds");
        }
        ensure!(seen == (0..n).collect(), "n {n}: folds do not cover every row");
    }

    let data = dominance_fixture();
    let base = TrainerConfig::default_for(ModelKind::Lr);
    let grid = BTreeMap::from([
        ("max_iter".to_string(), vec![ParamValue::Num(1.0), ParamValue::Num(100.0)]),
        (
            "l2".to_string(),
            vec![ParamValue::Num(0.0), ParamValue::Num(0.01), ParamValue::Num(0.1)],
        ),
    ]);
    let result = grid_search(&base, &grid, &data, 4).map_err(|e| e.to_string())?;
    let points: BTreeSet<String> = result.runs.iter().map(|(p, _)| format!("{:?}", p.params)).collect();
    let mut product = BTreeSet::new();
    for it in &grid["max_iter"] {
        for l2 in &grid["l2"] {
            let p = BTreeMap::from([("l2".to_string(), l2.clone()), ("max_iter".to_string(), it.clone())]);
            product.insert(format!("{p:?}"));
        }
    }
    ensure!(result.runs.len() == 6 && points == product, "grid visited {points:?}");
    let (best, best_cv) = result.best();
    ensure!(
        best.params["max_iter"] == ParamValue::Num(100.0),
        "picked {:?} ({})",
        best.params,
        best_cv.mean_accuracy
    );
    let crippled = result
        .runs
        .iter()
        .filter(|(p, _)| p.params["max_iter"] == ParamValue::Num(1.0))
        .map(|(_, cv)| cv.mean_accuracy)
        .fold(f64::MIN, f64::max);
    ensure!(best_cv.mean_accuracy > crippled, "fixture does not dominate: {} vs {crippled}", best_cv.mean_accuracy);
    Ok(format!(
        "50 datasets partitioned; 6/6 grid points; best cv {:.3} vs {crippled:.3}",
        best_cv.mean_accuracy
    ))
}

fn expect_corrupt(bytes: &[u8], what: &str) -> Result<(), String> {
    match store::decode(bytes) {
        Err(StoreError::CorruptPayload(_)) => Ok(()),
        other => Err(format!("{what}: expected corrupt payload, got {:?}", other.map(|_| "decoded"))),
    }
}

pub fn store_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = PreprocessConfig::english();
    let spec = SynthSpec {
        num_docs: 100,
        seed: 8,
        ..SynthSpec::default()
    };
    let mut probes: Vec<String> = synth_corpus(&SynthSpec { seed: 80, ..spec })
        .documents
        .into_iter()
        .map(|d| d.text)
        .collect();
    probes.extend(["".to_string(), "qqq zzz unseen".to_string()]);
    let mut last_bytes = Vec::new();
    for kind in ModelKind::ALL {
        let mut trainer = TrainerConfig::default_for(kind);
        match kind {
            ModelKind::Mlp => trainer.set_param("hidden", &ParamValue::Num(8.0)),
            ModelKind::Rf => trainer.set_param("num_trees", &ParamValue::Num(10.0)),
            _ => Ok(()),
        }
        .map_err(|e| e.to_string())?;
        let stored = run_training(synth_corpus(&spec), &TrainRequest::new(FeatureCombo::UniCvIdf, trainer), &cfg)
            .map_err(|e| format!("{kind}: {e}"))?
            .stored;
        let path = dir.path().join(format!("{kind}.isp"));
        let digest = store::save(&stored, &path).map_err(|e| e.to_string())?;
        let loaded = store::load(&path).map_err(|e| format!("{kind}: {e}"))?;
        ensure!(loaded.digest == digest && loaded.stored == stored, "{kind}: loaded pipeline differs");
        for text in &probes {
            let a = predict_text(&stored, text, &cfg).map_err(|e| e.to_string())?;
            let b = predict_text(&loaded.stored, text, &cfg).map_err(|e| e.to_string())?;
            ensure!(
                a.label == b.label && a.score.to_bits() == b.score.to_bits(),
                "{kind}: prediction drift on {text:?}"
            );
        }
        last_bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    }
    let bytes = last_bytes;
    for cut in [0, 5, bytes.len() / 2, bytes.len() - 1] {
        expect_corrupt(&bytes[..cut], &format!("truncated at {cut}"))?;
    }
    for pos in [9, bytes.len() / 3, bytes.len() - 2] {
        let mut b = bytes.clone();
        b[pos] ^= 0x10;
        expect_corrupt(&b, &format!("bit flip at {pos}"))?;
    }
    let mut b = bytes.clone();
    b[4] = b[4].wrapping_add(1);
    ensure!(
        matches!(store::decode(&b), Err(StoreError::VersionMismatch { .. })),
        "version bump not rejected"
    );
    Ok(format!("6 kinds x {} probes bit-identical; truncation, flips, version bump rejected", probes.len()))
}
