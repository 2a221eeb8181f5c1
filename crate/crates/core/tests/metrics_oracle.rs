use ideation_core::evaluation::{
    confusion, metrics, roc_auc, roc_curve, trapezoid_area, Averaging, ConfusionMatrix, EvalError,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Recount from an explicit list of (pred, gold) pairs and the textbook formulas.
fn oracle(cm: &ConfusionMatrix, averaging: Averaging) -> (f64, f64, f64, f64) {
    let mut pairs = Vec::new();
    pairs.extend(std::iter::repeat_n((1u8, 1u8), cm.tp as usize));
    pairs.extend(std::iter::repeat_n((1u8, 0u8), cm.fp as usize));
    pairs.extend(std::iter::repeat_n((0u8, 1u8), cm.fn_ as usize));
    pairs.extend(std::iter::repeat_n((0u8, 0u8), cm.tn as usize));
    let n = pairs.len() as f64;
    let correct = pairs.iter().filter(|(p, g)| p == g).count() as f64;
    let per_class = |c: u8| {
        let predicted = pairs.iter().filter(|(p, _)| *p == c).count() as f64;
        let actual = pairs.iter().filter(|(_, g)| *g == c).count() as f64;
        let hit = pairs.iter().filter(|(p, g)| *p == c && *g == c).count() as f64;
        let p = if predicted == 0.0 { 0.0 } else { hit / predicted };
        let r = if actual == 0.0 { 0.0 } else { hit / actual };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f, actual)
    };
    let (p, r, f) = match averaging {
        Averaging::PositiveClass => {
            let (p, r, f, _) = per_class(1);
            (p, r, f)
        }
        Averaging::Weighted => {
            let (p1, r1, f1, s1) = per_class(1);
            let (p0, r0, f0, s0) = per_class(0);
            (
                (s1 / n) * p1 + (s0 / n) * p0,
                (s1 / n) * r1 + (s0 / n) * r0,
                (s1 / n) * f1 + (s0 / n) * f0,
            )
        }
    };
    (correct / n, p, r, f)
}

#[test]
fn metrics_match_recount_on_200_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let cm = ConfusionMatrix {
            tp: rng.gen_range(0..40),
            fp: rng.gen_range(0..40),
            fn_: rng.gen_range(0..40),
            tn: rng.gen_range(0..40),
        };
        if cm.total() == 0 {
            continue;
        }
        for avg in [Averaging::PositiveClass, Averaging::Weighted] {
            let m = metrics(&cm, avg).unwrap();
            let (a, p, r, f) = oracle(&cm, avg);
            assert_eq!(m.accuracy, a, "{cm:?}");
            assert_eq!((m.precision, m.recall, m.f1), (p, r, f), "{cm:?} {avg:?}");
            for v in [m.accuracy, m.precision, m.recall, m.f1] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}

#[test]
fn the_3_1_1_5_fixture() {
    let preds = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
    let gold = [1, 1, 1, 0, 1, 0, 0, 0, 0, 0];
    let cm = confusion(&preds, &gold).unwrap();
    assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn), (3, 1, 1, 5));
    let m = metrics(&cm, Averaging::PositiveClass).unwrap();
    assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (0.8, 0.75, 0.75, 0.75));
}

#[test]
fn degenerate_confusions() {
    let all_pos = [1u8; 7];
    let cm = confusion(&all_pos, &all_pos).unwrap();
    assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn), (7, 0, 0, 0));
    let gold = [1, 0, 1, 1, 0];
    let comp: Vec<u8> = gold.iter().map(|g| 1 - g).collect();
    let cm = confusion(&comp, &gold).unwrap();
    assert_eq!((cm.tp, cm.tn), (0, 0));
    assert_eq!(
        confusion(&[1, 0], &[1]),
        Err(EvalError::LengthMismatch { preds: 2, gold: 1 })
    );
    let perfect = metrics(&confusion(&gold, &gold).unwrap(), Averaging::Weighted).unwrap();
    assert_eq!((perfect.accuracy, perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0, 1.0));
}

fn pairwise_auc(scores: &[f64], gold: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &gi) in gold.iter().enumerate() {
        if gi != 1 {
            continue;
        }
        for (j, &gj) in gold.iter().enumerate() {
            if gj != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

fn random_scored(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    loop {
        let n = rng.gen_range(2..=500);
        // coarse grids make ties common
        let levels = rng.gen_range(2..50);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let gold: Vec<u8> = scores
            .iter()
            .map(|s| u8::from(rng.gen_bool((0.2 + 0.6 * s).min(0.95))))
            .collect();
        if gold.contains(&0) && gold.contains(&1) {
            return (scores, gold);
        }
    }
}

#[test]
fn auc_equals_pairwise_count_on_100_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let (scores, gold) = random_scored(&mut rng);
        let fast = roc_auc(&scores, &gold).unwrap();
        let slow = pairwise_auc(&scores, &gold);
        assert!((fast - slow).abs() <= 1e-12, "{fast} vs {slow}");
        let curve = roc_curve(&scores, &gold).unwrap();
        assert!((trapezoid_area(&curve) - fast).abs() <= 1e-12);
    }
}

#[test]
fn auc_fixtures() {
    assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.2], &[1, 0, 1, 0]).unwrap(), 0.75);
    assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
    assert_eq!(roc_auc(&[0.5; 10], &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]).unwrap(), 0.5);
    assert_eq!(roc_auc(&[0.5, 0.5], &[0, 0]), Err(EvalError::SingleClass));
}

#[test]
fn coin_flip_scores_give_auc_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let gold: Vec<u8> = (0..1000).map(|i| (i % 2) as u8).collect();
    let scores: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>()).collect();
    let auc = roc_auc(&scores, &gold).unwrap();
    assert!((0.45..=0.55).contains(&auc), "{auc}");
}

proptest! {
    #[test]
    fn auc_invariant_under_increasing_transform(
        raw in prop::collection::vec((0u8..20, any::<bool>()), 2..200),
        shift in -5.0f64..5.0,
        scale in 0.01f64..10.0,
    ) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 20.0).collect();
        let gold: Vec<u8> = raw.iter().map(|(_, g)| u8::from(*g)).collect();
        prop_assume!(gold.contains(&0) && gold.contains(&1));
        let base = roc_auc(&scores, &gold).unwrap();
        let moved: Vec<f64> = scores.iter().map(|s| (scale * s + shift).exp()).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3) - 1.0).collect();
        prop_assert_eq!(roc_auc(&moved, &gold).unwrap(), base);
        prop_assert_eq!(roc_auc(&cubed, &gold).unwrap(), base);
    }

    #[test]
    fn complement_accuracy(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..100)) {
        let preds: Vec<u8> = pairs.iter().map(|p| p.0).collect();
        let gold: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        let comp: Vec<u8> = preds.iter().map(|p| 1 - p).collect();
        let a = metrics(&confusion(&preds, &gold).unwrap(), Averaging::Weighted).unwrap().accuracy;
        let b = metrics(&confusion(&comp, &gold).unwrap(), Averaging::Weighted).unwrap().accuracy;
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }
}
