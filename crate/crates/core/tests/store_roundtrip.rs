use ideation_core::classifiers::{ModelKind, ParamValue, TrainerConfig};
use ideation_core::features::FeatureCombo;
use ideation_core::preprocess::PreprocessConfig;
use ideation_core::store::{self, StoreError, StoredPipeline, FORMAT_VERSION};
use ideation_core::synth::{synth_corpus, SynthSpec};
use ideation_core::workflow::{predict_text, run_training, TrainRequest};

fn fixture_spec() -> SynthSpec {
    SynthSpec {
        num_docs: 100,
        seed: 3,
        ..SynthSpec::default()
    }
}

fn trained(kind: ModelKind, combo: FeatureCombo) -> StoredPipeline {
    let mut trainer = TrainerConfig::default_for(kind);
    match kind {
        ModelKind::Mlp => {
            trainer.set_param("hidden", &ParamValue::Num(8.0)).unwrap();
        }
        ModelKind::Rf => {
            trainer.set_param("num_trees", &ParamValue::Num(10.0)).unwrap();
        }
        _ => {}
    }
    let cfg = PreprocessConfig::english();
    run_training(synth_corpus(&fixture_spec()), &TrainRequest::new(combo, trainer), &cfg)
        .unwrap()
        .stored
}

fn probe_texts() -> Vec<String> {
    let mut spec = fixture_spec();
    spec.seed = 99;
    let mut texts: Vec<String> = synth_corpus(&spec).documents.into_iter().map(|d| d.text).collect();
    texts.push(String::new());
    texts.push("zzzz unseen qqqq".into());
    texts
}

#[test]
fn all_kinds_round_trip_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PreprocessConfig::english();
    let probes = probe_texts();
    for kind in ModelKind::ALL {
        for combo in [FeatureCombo::UniCvIdf, FeatureCombo::UniTfIdf] {
            let stored = trained(kind, combo);
            let path = dir.path().join(format!("{kind}-{combo}.isp"));
            let digest = store::save(&stored, &path).unwrap();
            let loaded = store::load(&path).unwrap();
            assert_eq!(loaded.digest, digest);
            assert_eq!(loaded.stored, stored, "{kind} {combo}");
            for text in &probes {
                let a = predict_text(&stored, text, &cfg).unwrap();
                let b = predict_text(&loaded.stored, text, &cfg).unwrap();
                assert_eq!(a.label, b.label);
                assert_eq!(a.score.to_bits(), b.score.to_bits(), "{kind} {combo} on {text:?}");
            }
            let again = dir.path().join("again.isp");
            assert_eq!(store::save(&loaded.stored, &again).unwrap(), digest);
            assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(&path).unwrap());
            assert_eq!(store::read_header(&path).unwrap().model_kind, kind);
            assert!(loaded.stored.check_preprocess(&cfg));
        }
    }
}

#[test]
fn version_bump_is_rejected_before_checksum() {
    let mut bytes = store::encode(&trained(ModelKind::Nb, FeatureCombo::UniCvIdf));
    bytes[4] = bytes[4].wrapping_add(1);
    match store::decode(&bytes) {
        Err(StoreError::VersionMismatch { found, supported }) => {
            assert_eq!(found, FORMAT_VERSION + 1);
            assert_eq!(supported, FORMAT_VERSION);
        }
        other => panic!("expected VersionMismatch, got {other:?}"),
    }
}

#[test]
fn truncation_and_bit_flips_are_corrupt() {
    let bytes = store::encode(&trained(ModelKind::Lr, FeatureCombo::UniCvIdf));
    for cut in [0, 3, 6, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            matches!(store::decode(&bytes[..cut]), Err(StoreError::CorruptPayload(_))),
            "cut at {cut}"
        );
    }
    for pos in [8, bytes.len() / 3, bytes.len() - 6] {
        let mut b = bytes.clone();
        b[pos] ^= 0x40;
        assert!(matches!(store::decode(&b), Err(StoreError::CorruptPayload(_))), "flip at {pos}");
    }
    let mut b = bytes.clone();
    b[0] = b'X';
    assert!(matches!(store::decode(&b), Err(StoreError::CorruptPayload(_))));
}

#[test]
fn unknown_model_tag_with_valid_checksum_is_corrupt() {
    let mut bytes = store::encode(&trained(ModelKind::Nb, FeatureCombo::UniCvIdf));
    let marker = [5u8, 0, 0, 0, b'm', b'o', b'd', b'e', b'l'];
    let at = bytes
        .windows(marker.len())
        .rposition(|w| w == marker)
        .expect("model section present");
    let tag = at + marker.len() + 8;
    bytes[tag] = 0xEE;
    let body_len = bytes.len() - 4;
    let crc = crc32fast::hash(&bytes[..body_len]);
    bytes[body_len..].copy_from_slice(&crc.to_le_bytes());
    match store::decode(&bytes) {
        Err(StoreError::CorruptPayload(msg)) => assert!(!msg.is_empty()),
        other => panic!("expected CorruptPayload, got {other:?}"),
    }
}

#[test]
fn missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        store::load(dir.path().join("nope.isp")),
        Err(StoreError::Io { .. })
    ));
}
