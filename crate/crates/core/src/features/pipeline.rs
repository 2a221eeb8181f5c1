use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    apply_tfidf, count_vectorize, fit_idf, fit_vocabulary, hashing_tf, ngrams, FeatureError, IdfModel, NGramSpec,
    SparseVector, Vocabulary,
};

/// The four supported feature combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureCombo {
    /// Unigrams through HashingTF, then IDF.
    UniTfIdf,
    /// Unigrams through CountVectorizer, then IDF.
    UniCvIdf,
    /// Bigrams through CountVectorizer, then IDF.
    BiCvIdf,
    /// Unigrams and bigrams through CountVectorizer, then IDF.
    UniBiCvIdf,
}

impl FeatureCombo {
    pub const ALL: [FeatureCombo; 4] = [
        FeatureCombo::UniTfIdf,
        FeatureCombo::UniCvIdf,
        FeatureCombo::BiCvIdf,
        FeatureCombo::UniBiCvIdf,
    ];

    pub fn ngram_spec(self) -> NGramSpec {
        match self {
            FeatureCombo::UniTfIdf | FeatureCombo::UniCvIdf => NGramSpec::unigrams(),
            FeatureCombo::BiCvIdf => NGramSpec::bigrams(),
            FeatureCombo::UniBiCvIdf => NGramSpec::uni_bigrams(),
        }
    }

    pub fn uses_hashing(self) -> bool {
        matches!(self, FeatureCombo::UniTfIdf)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureCombo::UniTfIdf => "uni-tf-idf",
            FeatureCombo::UniCvIdf => "uni-cv-idf",
            FeatureCombo::BiCvIdf => "bi-cv-idf",
            FeatureCombo::UniBiCvIdf => "uni-bi-cv-idf",
        }
    }

    /// Human-readable name as used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            FeatureCombo::UniTfIdf => "Unigram+TF-IDF",
            FeatureCombo::UniCvIdf => "Unigram+CV-IDF",
            FeatureCombo::BiCvIdf => "Bigram+CV-IDF",
            FeatureCombo::UniBiCvIdf => "(Unigram+Bigram)+CV-IDF",
        }
    }
}

impl fmt::Display for FeatureCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureCombo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureCombo::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown feature combo `{s}` (expected uni-tf-idf, uni-cv-idf, bi-cv-idf or uni-bi-cv-idf)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// CountVectorizer paths keep grams seen more than this many times.
    pub min_tf: usize,
    /// HashingTF bucket count (power of two).
    pub num_buckets: usize,
    /// Optional cap on vocabulary size (most frequent grams kept).
    pub max_terms: Option<usize>,
    /// Divide counts by the document's gram count before IDF weighting.
    pub normalize_length: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            min_tf: 4,
            num_buckets: 1 << 18,
            max_terms: None,
            normalize_length: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TermMapping {
    Vocabulary(Vocabulary),
    Hashing { num_buckets: usize },
}

/// A fitted feature extractor. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePipeline {
    combo: FeatureCombo,
    ngram: NGramSpec,
    mapping: TermMapping,
    idf: IdfModel,
    normalize_length: bool,
}

impl FeaturePipeline {
    /// Fits term mapping and IDF weights on training documents only.
    pub fn fit<S: AsRef<str>, D: AsRef<[S]>>(
        docs: &[D],
        combo: FeatureCombo,
        options: &FeatureOptions,
    ) -> Result<Self, FeatureError> {
        if docs.is_empty() {
            return Err(FeatureError::EmptyCorpus);
        }
        let ngram = combo.ngram_spec();
        let (mapping, counts) = if combo.uses_hashing() {
            let counts = docs
                .iter()
                .map(|d| hashing_tf(&ngrams(d.as_ref(), &ngram), options.num_buckets))
                .collect::<Result<Vec<_>, _>>()?;
            (
                TermMapping::Hashing {
                    num_buckets: options.num_buckets,
                },
                counts,
            )
        } else {
            let vocab = fit_vocabulary(docs, &ngram, options.min_tf, options.max_terms)?;
            let counts = docs
                .iter()
                .map(|d| count_vectorize(&ngrams(d.as_ref(), &ngram), &vocab))
                .collect();
            (TermMapping::Vocabulary(vocab), counts)
        };
        let idf = fit_idf(&counts)?;
        Ok(Self {
            combo,
            ngram,
            mapping,
            idf,
            normalize_length: options.normalize_length,
        })
    }

    pub(crate) fn from_parts(
        combo: FeatureCombo,
        mapping: TermMapping,
        idf: IdfModel,
        normalize_length: bool,
    ) -> Result<Self, FeatureError> {
        let expected = match &mapping {
            TermMapping::Vocabulary(v) => v.len(),
            TermMapping::Hashing { num_buckets } => *num_buckets,
        };
        if expected != idf.dim() {
            return Err(FeatureError::DimensionMismatch {
                expected,
                got: idf.dim(),
            });
        }
        Ok(Self {
            combo,
            ngram: combo.ngram_spec(),
            mapping,
            idf,
            normalize_length,
        })
    }

    pub fn combo(&self) -> FeatureCombo {
        self.combo
    }

    pub fn ngram_spec(&self) -> &NGramSpec {
        &self.ngram
    }

    pub fn mapping(&self) -> &TermMapping {
        &self.mapping
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        match &self.mapping {
            TermMapping::Vocabulary(v) => Some(v),
            TermMapping::Hashing { .. } => None,
        }
    }

    pub fn idf(&self) -> &IdfModel {
        &self.idf
    }

    pub fn normalize_length(&self) -> bool {
        self.normalize_length
    }

    pub fn dim(&self) -> usize {
        self.idf.dim()
    }

    /// Raw term counts for a document, before length normalization and IDF.
    pub fn term_counts<S: AsRef<str>>(&self, tokens: &[S]) -> (SparseVector, usize) {
        let grams = ngrams(tokens, &self.ngram);
        let counts = match &self.mapping {
            TermMapping::Vocabulary(v) => count_vectorize(&grams, v),
            TermMapping::Hashing { num_buckets } => {
                hashing_tf(&grams, *num_buckets).expect("bucket count validated at fit time")
            }
        };
        (counts, grams.len())
    }

    /// Maps a preprocessed document to its TF-IDF vector.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        let (counts, num_grams) = self.term_counts(tokens);
        let tf = if self.normalize_length && num_grams > 0 {
            let len = num_grams as f64;
            counts.map_values(|_, v| v / len)
        } else {
            counts
        };
        apply_tfidf(&tf, &self.idf).expect("dimension fixed at fit time")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs() -> Vec<Vec<String>> {
        ["want to die now", "want to play games", "die die alone", "play games now"]
            .iter()
            .map(|s| s.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    fn opts() -> FeatureOptions {
        FeatureOptions {
            min_tf: 0,
            num_buckets: 64,
            ..FeatureOptions::default()
        }
    }

    #[test]
    fn hashing_combo_has_no_vocabulary() {
        let p = FeaturePipeline::fit(&docs(), FeatureCombo::UniTfIdf, &opts()).unwrap();
        assert!(p.vocabulary().is_none());
        assert_eq!(p.dim(), 64);
    }

    #[test]
    fn uni_bi_combo_mixes_orders() {
        let p = FeaturePipeline::fit(&docs(), FeatureCombo::UniBiCvIdf, &opts()).unwrap();
        let vocab = p.vocabulary().unwrap();
        assert!(vocab.index_of("want to").is_some());
        assert!(vocab.index_of("die").is_some());
        assert_eq!(p.ngram_spec().orders(), &[1, 2]);
    }

    #[test]
    fn transform_equals_manual_composition() {
        let mut o = opts();
        o.normalize_length = false;
        let d = docs();
        let p = FeaturePipeline::fit(&d, FeatureCombo::UniCvIdf, &o).unwrap();
        let vocab = p.vocabulary().unwrap();
        for doc in &d {
            let manual = apply_tfidf(&count_vectorize(&ngrams(doc, &NGramSpec::unigrams()), vocab), p.idf()).unwrap();
            assert_eq!(p.transform(doc), manual);
        }
        assert_eq!(p.transform(&d[0]), p.transform(&d[0]));
    }

    #[test]
    fn unseen_document_keeps_dimension() {
        let p = FeaturePipeline::fit(&docs(), FeatureCombo::BiCvIdf, &opts()).unwrap();
        let v = p.transform(&["never", "seen"]);
        assert!(v.is_empty());
        assert_eq!(v.dim(), p.dim());
        let before = p.clone();
        let _ = p.transform(&["want", "to", "zebra"]);
        assert_eq!(p, before);
    }

    #[test]
    fn combo_names_round_trip() {
        for c in FeatureCombo::ALL {
            assert_eq!(c.as_str().parse::<FeatureCombo>().unwrap(), c);
        }
        assert!("tf".parse::<FeatureCombo>().is_err());
    }
}
