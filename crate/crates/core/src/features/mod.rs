//! N-gram, CountVectorizer, HashingTF and IDF feature extraction.

mod pipeline;
mod sparse;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pipeline::{FeatureCombo, FeatureOptions, FeaturePipeline, TermMapping};
pub use sparse::SparseVector;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("no gram occurs more than {min_tf} times in the corpus")]
    EmptyVocabulary { min_tf: usize },
    #[error("vector dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("cannot fit on an empty corpus")]
    EmptyCorpus,
    #[error("bucket count must be a power of two >= 2, got {0}")]
    InvalidBuckets(usize),
    #[error("n-gram orders must be a non-empty subset of {{1, 2}}")]
    InvalidOrders,
}

/// Which n-gram orders to emit, and how multi-word grams are joined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGramSpec {
    orders: Vec<usize>,
    joiner: String,
}

impl NGramSpec {
    pub fn new(mut orders: Vec<usize>) -> Result<Self, FeatureError> {
        orders.sort_unstable();
        orders.dedup();
        if orders.is_empty() || orders.iter().any(|&n| n != 1 && n != 2) {
            return Err(FeatureError::InvalidOrders);
        }
        Ok(Self {
            orders,
            joiner: " ".to_string(),
        })
    }

    pub fn unigrams() -> Self {
        Self::new(vec![1]).unwrap()
    }

    pub fn bigrams() -> Self {
        Self::new(vec![2]).unwrap()
    }

    pub fn uni_bigrams() -> Self {
        Self::new(vec![1, 2]).unwrap()
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn joiner(&self) -> &str {
        &self.joiner
    }
}

/// All n-gram windows, grouped by ascending order then by position.
pub fn ngrams<S: AsRef<str>>(tokens: &[S], spec: &NGramSpec) -> Vec<String> {
    let mut out = Vec::new();
    for &n in &spec.orders {
        if tokens.len() < n {
            continue;
        }
        for window in tokens.windows(n) {
            let mut gram = String::from(window[0].as_ref());
            for t in &window[1..] {
                gram.push_str(&spec.joiner);
                gram.push_str(t.as_ref());
            }
            out.push(gram);
        }
    }
    out
}

/// Gram to column mapping with per-gram document frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<u64>,
    num_docs: u64,
    min_tf: usize,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub(crate) fn from_parts(terms: Vec<String>, doc_freq: Vec<u64>, num_docs: u64, min_tf: usize) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            terms,
            doc_freq,
            num_docs,
            min_tf,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).map(|&i| i as usize)
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self, index: usize) -> u64 {
        self.doc_freq[index]
    }

    pub fn doc_freqs(&self) -> &[u64] {
        &self.doc_freq
    }

    pub fn num_docs(&self) -> u64 {
        self.num_docs
    }

    pub fn min_tf(&self) -> usize {
        self.min_tf
    }
}

/// Keeps grams whose corpus-wide count is strictly greater than `min_tf`.
///
/// Columns are ordered by descending corpus frequency, ties broken by the
/// lexicographically smaller gram. `max_terms` optionally caps the size.
pub fn fit_vocabulary<S: AsRef<str>, D: AsRef<[S]>>(
    docs: &[D],
    spec: &NGramSpec,
    min_tf: usize,
    max_terms: Option<usize>,
) -> Result<Vocabulary, FeatureError> {
    if docs.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut stats: HashMap<String, (u64, u64)> = HashMap::new();
    for doc in docs {
        let mut grams = ngrams(doc.as_ref(), spec);
        for g in &grams {
            stats.entry(g.clone()).or_default().0 += 1;
        }
        grams.sort_unstable();
        grams.dedup();
        for g in grams {
            stats.get_mut(&g).expect("counted above").1 += 1;
        }
    }
    let mut kept: Vec<(String, u64, u64)> = stats
        .into_iter()
        .filter(|(_, (tf, _))| *tf > min_tf as u64)
        .map(|(g, (tf, df))| (g, tf, df))
        .collect();
    if kept.is_empty() {
        return Err(FeatureError::EmptyVocabulary { min_tf });
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(cap) = max_terms {
        kept.truncate(cap.max(1));
    }
    let (terms, doc_freq) = kept.into_iter().map(|(g, _, df)| (g, df)).unzip();
    Ok(Vocabulary::from_parts(terms, doc_freq, docs.len() as u64, min_tf))
}

/// Raw in-vocabulary gram counts; out-of-vocabulary grams are ignored.
pub fn count_vectorize<S: AsRef<str>>(grams: &[S], vocab: &Vocabulary) -> SparseVector {
    let pairs = grams
        .iter()
        .filter_map(|g| vocab.index_of(g.as_ref()).map(|i| (i as u32, 1.0)))
        .collect();
    SparseVector::from_pairs(vocab.len(), pairs).expect("vocabulary indices are in range")
}

/// 32-bit FNV-1a over the UTF-8 bytes.
pub fn fnv1a_32(bytes: &[u8]) -> u32 {
    let mut hash: u32 = 0x811c_9dc5;
    for &b in bytes {
        hash ^= b as u32;
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash
}

pub fn hash_bucket(term: &str, num_buckets: usize) -> usize {
    (fnv1a_32(term.as_bytes()) as usize) % num_buckets
}

/// Raw term counts summed per FNV-1a bucket.
pub fn hashing_tf<S: AsRef<str>>(grams: &[S], num_buckets: usize) -> Result<SparseVector, FeatureError> {
    if num_buckets < 2 || !num_buckets.is_power_of_two() || num_buckets > u32::MAX as usize {
        return Err(FeatureError::InvalidBuckets(num_buckets));
    }
    let pairs = grams
        .iter()
        .map(|g| (hash_bucket(g.as_ref(), num_buckets) as u32, 1.0))
        .collect();
    SparseVector::from_pairs(num_buckets, pairs)
}

/// Smoothed inverse document frequency weights, one per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfModel {
    idf: Vec<f64>,
    num_docs: u64,
}

impl IdfModel {
    pub(crate) fn from_parts(idf: Vec<f64>, num_docs: u64) -> Self {
        Self { idf, num_docs }
    }

    /// `ln((N + 1) / (df + 1))` for each column.
    pub fn from_doc_freqs(doc_freq: &[u64], num_docs: u64) -> Self {
        let n = num_docs as f64;
        Self {
            idf: doc_freq
                .iter()
                .map(|&df| ((n + 1.0) / (df as f64 + 1.0)).ln())
                .collect(),
            num_docs,
        }
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.idf
    }

    pub fn num_docs(&self) -> u64 {
        self.num_docs
    }

    /// Always true; idf is the smoothed `ln((N+1)/(df+1))` variant.
    pub fn smoothing(&self) -> bool {
        true
    }
}

/// Counts, per column, the vectors with a nonzero entry and converts to idf.
pub fn fit_idf(vectors: &[SparseVector]) -> Result<IdfModel, FeatureError> {
    let first = vectors.first().ok_or(FeatureError::EmptyCorpus)?;
    let dim = first.dim();
    let mut df = vec![0u64; dim];
    for v in vectors {
        if v.dim() != dim {
            return Err(FeatureError::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
        for (i, _) in v.iter() {
            df[i] += 1;
        }
    }
    Ok(IdfModel::from_doc_freqs(&df, vectors.len() as u64))
}

pub fn apply_tfidf(vec: &SparseVector, idf: &IdfModel) -> Result<SparseVector, FeatureError> {
    if vec.dim() != idf.dim() {
        return Err(FeatureError::DimensionMismatch {
            expected: idf.dim(),
            got: vec.dim(),
        });
    }
    Ok(vec.map_values(|i, v| v * idf.idf[i]))
}
