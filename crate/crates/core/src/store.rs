//! `.isp` pipeline files: the fitted feature pipeline plus one trained model.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ISPF" | u16 version | u32 header_len | header JSON
//! u32 section_count | { u32 name_len | name | u64 len | bytes }*
//! u32 CRC-32 of everything above
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a round trip is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifiers::{
    DecisionTree, LinearSvc, LogisticRegression, Mlp, MlpLayer, Model, ModelArtifact, ModelKind, NaiveBayes,
    RandomForest, TrainingMeta, TreeNode,
};
use crate::evaluation::MetricsReport;
use crate::features::{FeatureCombo, FeaturePipeline, IdfModel, TermMapping, Vocabulary};
use crate::preprocess::PreprocessConfig;

pub const MAGIC: &[u8; 4] = b"ISPF";
pub const FORMAT_VERSION: u16 = 1;
pub const EXTENSION: &str = "isp";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unsupported format version {found} (this build reads version {supported})")]
    VersionMismatch { found: u16, supported: u16 },
    #[error("corrupt pipeline file: {0}")]
    CorruptPayload(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn corrupt(msg: impl Into<String>) -> StoreError {
    StoreError::CorruptPayload(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub combo: FeatureCombo,
    pub normalize_length: bool,
    pub dim: usize,
    /// `"vocabulary"` or `"hashing"`.
    pub mapping: String,
    pub corpus_docs: u64,
    pub min_tf: Option<usize>,
}

/// Human-readable metadata stored ahead of the binary sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub format_version: u16,
    pub model_kind: ModelKind,
    pub features: FeatureSummary,
    pub preprocess_config_digest: String,
    pub metrics: Option<MetricsReport>,
    pub training: TrainingMeta,
}

/// Everything a `.isp` file holds.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredPipeline {
    pub pipeline: FeaturePipeline,
    pub artifact: ModelArtifact,
    pub preprocess_config_digest: String,
    pub metrics: Option<MetricsReport>,
}

impl StoredPipeline {
    pub fn new(pipeline: FeaturePipeline, artifact: ModelArtifact, preprocess: &PreprocessConfig) -> Self {
        Self {
            pipeline,
            artifact,
            preprocess_config_digest: preprocess.digest(),
            metrics: None,
        }
    }

    pub fn with_metrics(mut self, metrics: MetricsReport) -> Self {
        self.metrics = Some(metrics);
        self
    }

    pub fn header(&self) -> StoreHeader {
        let (mapping, min_tf) = match self.pipeline.mapping() {
            TermMapping::Vocabulary(v) => ("vocabulary", Some(v.min_tf())),
            TermMapping::Hashing { .. } => ("hashing", None),
        };
        StoreHeader {
            format_version: FORMAT_VERSION,
            model_kind: self.artifact.kind(),
            features: FeatureSummary {
                combo: self.pipeline.combo(),
                normalize_length: self.pipeline.normalize_length(),
                dim: self.pipeline.dim(),
                mapping: mapping.into(),
                corpus_docs: self.pipeline.idf().num_docs(),
                min_tf,
            },
            preprocess_config_digest: self.preprocess_config_digest.clone(),
            metrics: self.metrics,
            training: self.artifact.meta.clone(),
        }
    }

    /// Logs a warning and returns false when `cfg` differs from the one used at training time.
    pub fn check_preprocess(&self, cfg: &PreprocessConfig) -> bool {
        let runtime = cfg.digest();
        let same = runtime == self.preprocess_config_digest;
        if !same {
            log::warn!(
                "preprocess config digest {} differs from the one the model was trained with ({})",
                runtime,
                self.preprocess_config_digest
            );
        }
        same
    }
}

/// Hex SHA-256 of a byte string.
pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("section element count fits in u32"));
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.len(vs.len());
        self.0.reserve(vs.len() * 8);
        for &v in vs {
            self.f64(v);
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.len(b.len());
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, at: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, StoreError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize, StoreError> {
        Ok(self.u32()? as usize)
    }
    fn f64s(&mut self) -> Result<Vec<f64>, StoreError> {
        let n = self.len()?;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn bytes(&mut self) -> Result<&'a [u8], StoreError> {
        let n = self.len()?;
        self.take(n)
    }
    fn finish(&self, what: &str) -> Result<(), StoreError> {
        if self.at == self.buf.len() {
            Ok(())
        } else {
            Err(corrupt(format!("trailing bytes in {what} section")))
        }
    }
}

fn encode_vocab(v: &Vocabulary) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u64(v.num_docs());
    w.u64(v.min_tf() as u64);
    w.len(v.len());
    for (term, df) in v.terms().iter().zip(v.doc_freqs()) {
        w.bytes(term.as_bytes());
        w.u64(*df);
    }
    w.0
}

fn decode_vocab(bytes: &[u8]) -> Result<Vocabulary, StoreError> {
    let mut r = Reader::new(bytes);
    let num_docs = r.u64()?;
    let min_tf = r.u64()? as usize;
    let n = r.len()?;
    let mut terms = Vec::with_capacity(n.min(bytes.len()));
    let mut dfs = Vec::with_capacity(n.min(bytes.len()));
    let mut seen = std::collections::HashSet::new();
    for _ in 0..n {
        let term = std::str::from_utf8(r.bytes()?).map_err(|_| corrupt("vocabulary term is not UTF-8"))?;
        if !seen.insert(term) {
            return Err(corrupt(format!("duplicate vocabulary term `{term}`")));
        }
        terms.push(term.to_string());
        dfs.push(r.u64()?);
    }
    r.finish("vocabulary")?;
    Ok(Vocabulary::from_parts(terms, dfs, num_docs, min_tf))
}

fn encode_tree(w: &mut Writer, t: &DecisionTree) {
    w.len(t.dim());
    w.len(t.nodes().len());
    for node in t.nodes() {
        match node {
            TreeNode::Leaf { counts } => {
                w.u8(0);
                w.u64(counts[0]);
                w.u64(counts[1]);
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                w.u8(1);
                w.u32(*feature);
                w.f64(*threshold);
                w.u32(*left);
                w.u32(*right);
            }
        }
    }
}

fn decode_tree(r: &mut Reader<'_>) -> Result<DecisionTree, StoreError> {
    let dim = r.len()?;
    let n = r.len()?;
    let mut nodes = Vec::with_capacity(n.min(r.buf.len()));
    for _ in 0..n {
        nodes.push(match r.u8()? {
            0 => TreeNode::Leaf {
                counts: [r.u64()?, r.u64()?],
            },
            1 => TreeNode::Split {
                feature: r.u32()?,
                threshold: r.f64()?,
                left: r.u32()?,
                right: r.u32()?,
            },
            t => return Err(corrupt(format!("unknown tree node tag {t}"))),
        });
    }
    DecisionTree::from_nodes(dim, nodes).ok_or_else(|| corrupt("inconsistent tree structure"))
}

fn encode_model(model: &Model) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u8(model.kind().tag());
    match model {
        Model::NaiveBayes(m) => {
            let p = m.log_prior();
            w.f64(p[0]);
            w.f64(p[1]);
            w.f64s(m.log_likelihood(0));
            w.f64s(m.log_likelihood(1));
        }
        Model::Logistic(m) => {
            w.f64s(m.weights());
            w.f64(m.bias());
        }
        Model::LinearSvc(m) => {
            w.f64s(m.weights());
            w.f64(m.bias());
        }
        Model::DecisionTree(t) => encode_tree(&mut w, t),
        Model::RandomForest(f) => {
            w.len(f.trees().len());
            for t in f.trees() {
                encode_tree(&mut w, t);
            }
        }
        Model::Mlp(m) => {
            w.len(m.layers().len());
            for l in m.layers() {
                w.len(l.inputs);
                w.len(l.outputs);
                w.f64s(&l.weights);
                w.f64s(&l.biases);
            }
        }
    }
    w.0
}

fn decode_model(bytes: &[u8]) -> Result<Model, StoreError> {
    let mut r = Reader::new(bytes);
    let tag = r.u8()?;
    let kind = ModelKind::from_tag(tag).ok_or_else(|| corrupt(format!("unknown model kind tag {tag}")))?;
    let model = match kind {
        ModelKind::Nb => {
            let prior = [r.f64()?, r.f64()?];
            let ll0 = r.f64s()?;
            let ll1 = r.f64s()?;
            if ll0.len() != ll1.len() {
                return Err(corrupt("naive Bayes class tables differ in length"));
            }
            Model::NaiveBayes(NaiveBayes {
                log_prior: prior,
                log_likelihood: [ll0, ll1],
            })
        }
        ModelKind::Lr => {
            let w = r.f64s()?;
            Model::Logistic(LogisticRegression::new(w, r.f64()?))
        }
        ModelKind::LinearSvc => {
            let w = r.f64s()?;
            Model::LinearSvc(LinearSvc::new(w, r.f64()?))
        }
        ModelKind::Dt => Model::DecisionTree(decode_tree(&mut r)?),
        ModelKind::Rf => {
            let n = r.len()?;
            let trees = (0..n).map(|_| decode_tree(&mut r)).collect::<Result<Vec<_>, _>>()?;
            Model::RandomForest(RandomForest::from_trees(trees).ok_or_else(|| corrupt("inconsistent forest"))?)
        }
        ModelKind::Mlp => {
            let n = r.len()?;
            let mut layers = Vec::with_capacity(n.min(64));
            for _ in 0..n {
                let inputs = r.len()?;
                let outputs = r.len()?;
                let weights = r.f64s()?;
                let biases = r.f64s()?;
                layers.push(MlpLayer {
                    inputs,
                    outputs,
                    weights,
                    biases,
                });
            }
            Model::Mlp(Mlp::from_layers(layers).ok_or_else(|| corrupt("inconsistent MLP layer shapes"))?)
        }
    };
    r.finish("model")?;
    Ok(model)
}

fn encode_idf(idf: &IdfModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u64(idf.num_docs());
    w.f64s(idf.weights());
    w.0
}

fn decode_idf(bytes: &[u8]) -> Result<IdfModel, StoreError> {
    let mut r = Reader::new(bytes);
    let num_docs = r.u64()?;
    let idf = r.f64s()?;
    r.finish("idf")?;
    Ok(IdfModel::from_parts(idf, num_docs))
}

/// Serializes `stored` into the `.isp` byte layout.
pub fn encode(stored: &StoredPipeline) -> Vec<u8> {
    let header = serde_json::to_vec(&stored.header()).expect("header serializes");
    let mut sections: Vec<(&str, Vec<u8>)> = Vec::new();
    if let TermMapping::Vocabulary(v) = stored.pipeline.mapping() {
        sections.push(("vocabulary", encode_vocab(v)));
    }
    sections.push(("idf", encode_idf(stored.pipeline.idf())));
    sections.push(("model", encode_model(&stored.artifact.model)));

    let mut w = Writer(Vec::with_capacity(64 + header.len() + sections.iter().map(|s| s.1.len() + 16).sum::<usize>()));
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    w.bytes(&header);
    w.len(sections.len());
    for (name, body) in &sections {
        w.bytes(name.as_bytes());
        w.u64(body.len() as u64);
        w.0.extend_from_slice(body);
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

/// Checks magic, version and checksum, returning the header JSON and the section area.
fn open_frame(bytes: &[u8]) -> Result<(StoreHeader, Reader<'_>), StoreError> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(corrupt("missing ISPF magic"));
    }
    let found = u16::from_le_bytes([bytes[4], bytes[5]]);
    if found != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch {
            found,
            supported: FORMAT_VERSION,
        });
    }
    if bytes.len() < 10 {
        return Err(corrupt("file too short"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32fast::hash(body) != stored_crc {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader::new(body);
    r.take(6)?;
    let header: StoreHeader =
        serde_json::from_slice(r.bytes()?).map_err(|e| corrupt(format!("bad header JSON: {e}")))?;
    Ok((header, r))
}

pub fn decode_header(bytes: &[u8]) -> Result<StoreHeader, StoreError> {
    open_frame(bytes).map(|(h, _)| h)
}

pub fn decode(bytes: &[u8]) -> Result<StoredPipeline, StoreError> {
    let (header, mut r) = open_frame(bytes)?;
    let count = r.len()?;
    let mut vocab = None;
    let mut idf = None;
    let mut model = None;
    for _ in 0..count {
        let name = std::str::from_utf8(r.bytes()?).map_err(|_| corrupt("section name is not UTF-8"))?;
        let len = usize::try_from(r.u64()?).map_err(|_| corrupt("section too large"))?;
        let body = r.take(len)?;
        match name {
            "vocabulary" => vocab = Some(decode_vocab(body)?),
            "idf" => idf = Some(decode_idf(body)?),
            "model" => model = Some(decode_model(body)?),
            other => return Err(corrupt(format!("unknown section `{other}`"))),
        }
    }
    r.finish("file")?;
    let idf = idf.ok_or_else(|| corrupt("missing idf section"))?;
    let model = model.ok_or_else(|| corrupt("missing model section"))?;
    if model.kind() != header.model_kind || header.training.kind != header.model_kind {
        return Err(corrupt("header and model section disagree on model kind"));
    }
    let f = &header.features;
    let mapping = match (f.mapping.as_str(), vocab) {
        ("vocabulary", Some(v)) => TermMapping::Vocabulary(v),
        ("hashing", None) => TermMapping::Hashing { num_buckets: f.dim },
        _ => return Err(corrupt("header mapping does not match sections")),
    };
    let pipeline = FeaturePipeline::from_parts(f.combo, mapping, idf, f.normalize_length)
        .map_err(|e| corrupt(format!("inconsistent feature pipeline: {e}")))?;
    if pipeline.dim() != f.dim || model.dim() != f.dim {
        return Err(corrupt(format!(
            "dimension mismatch: header {}, pipeline {}, model {}",
            f.dim,
            pipeline.dim(),
            model.dim()
        )));
    }
    Ok(StoredPipeline {
        pipeline,
        artifact: ModelArtifact {
            model,
            meta: header.training,
        },
        preprocess_config_digest: header.preprocess_config_digest,
        metrics: header.metrics,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `stored` to `path` (via a temporary file and rename) and returns the file's SHA-256.
pub fn save(stored: &StoredPipeline, path: impl AsRef<Path>) -> Result<String, StoreError> {
    let path = path.as_ref();
    let bytes = encode(stored);
    let tmp = path.with_extension("isp.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(digest_bytes(&bytes))
}

/// A decoded file together with the SHA-256 of its bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub stored: StoredPipeline,
    pub digest: String,
}

pub fn load(path: impl AsRef<Path>) -> Result<Loaded, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(Loaded {
        stored: decode(&bytes)?,
        digest: digest_bytes(&bytes),
    })
}

pub fn read_header(path: impl AsRef<Path>) -> Result<StoreHeader, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_header(&bytes)
}
