//! Labeled corpus loading, cleanup and train/test splitting.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),
    #[error("corpus has no usable rows")]
    EmptyCorpus,
    #[error("row {row}: unknown label `{value}` (expected `suicide` or `non-suicide`)")]
    UnknownLabel { row: usize, value: String },
    #[error("split would leave an empty side ({train} train / {test} test)")]
    DegenerateSplit { train: usize, test: usize },
    #[error("train fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Gold class of a post. `Suicide` is the positive class (label 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    NonSuicide,
    Suicide,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::NonSuicide => 0,
            Label::Suicide => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::NonSuicide),
            1 => Some(Label::Suicide),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NonSuicide => "non-suicide",
            Label::Suicide => "suicide",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "suicide" | "suicidal" | "1" => Ok(Label::Suicide),
            "non-suicide" | "nonsuicide" | "non_suicide" | "non suicide" | "non-suicidal" | "0" => {
                Ok(Label::NonSuicide)
            }
            _ => Err(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Option<Label>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Option<Label>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: PathBuf,
    /// Milliseconds since the Unix epoch.
    pub loaded_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub provenance: Option<Provenance>,
}

impl PartialEq for Corpus {
    /// Provenance is metadata; two corpora are equal when their documents are.
    fn eq(&self, other: &Self) -> bool {
        self.documents == other.documents
    }
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Self {
        Self {
            documents,
            provenance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// `(suicide, non_suicide, unlabeled)` counts.
    pub fn label_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for doc in &self.documents {
            match doc.label {
                Some(Label::Suicide) => counts.0 += 1,
                Some(Label::NonSuicide) => counts.1 += 1,
                None => counts.2 += 1,
            }
        }
        counts
    }

    /// Writes the corpus as `id,text,class` CSV. `load_csv` reads it back unchanged.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["id", "text", "class"])?;
        for doc in &self.documents {
            let label = doc.label.map(Label::as_str).unwrap_or("");
            out.write_record([doc.id.as_str(), doc.text.as_str(), label])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-reason row counts produced while loading a CSV file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub dropped_empty: usize,
    pub malformed: usize,
}

/// Loads a labeled (or unlabeled) corpus from CSV.
///
/// A header row is mandatory. When the header has an `id` column its values
/// become document ids, otherwise the 1-based data row number is used.
/// Invalid UTF-8 is replaced rather than rejected.
pub fn load_csv(
    path: impl AsRef<Path>,
    text_column: &str,
    label_column: Option<&str>,
) -> Result<(Corpus, LoadReport), CorpusError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let (mut corpus, report) = parse_csv(&bytes, text_column, label_column)?;
    let loaded_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    corpus.provenance = Some(Provenance {
        source: path.to_path_buf(),
        loaded_at,
    });
    Ok((corpus, report))
}

/// In-memory variant of [`load_csv`].
pub fn parse_csv(
    bytes: &[u8],
    text_column: &str,
    label_column: Option<&str>,
) -> Result<(Corpus, LoadReport), CorpusError> {
    let text = String::from_utf8_lossy(bytes);
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(text.as_bytes());

    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
    };
    let text_idx = find(text_column)?;
    let label_idx = label_column.map(find).transpose()?;
    let id_idx = headers.iter().position(|h| h.trim() == "id");

    let mut report = LoadReport::default();
    let mut documents = Vec::new();
    let mut seen_ids = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        report.rows_read += 1;
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                report.malformed += 1;
                continue;
            }
        };
        let needed = text_idx.max(label_idx.unwrap_or(0));
        if record.len() <= needed {
            report.malformed += 1;
            continue;
        }
        let body = &record[text_idx];
        if body.trim().is_empty() {
            report.dropped_empty += 1;
            continue;
        }
        let label = match label_idx {
            Some(idx) => Some(record[idx].parse::<Label>().map_err(|value| {
                CorpusError::UnknownLabel { row, value }
            })?),
            None => None,
        };
        let mut id = match id_idx.and_then(|idx| record.get(idx)) {
            Some(v) if !v.trim().is_empty() => v.trim().to_string(),
            _ => row.to_string(),
        };
        if !seen_ids.insert(id.clone()) {
            id = format!("{id}#{row}");
            seen_ids.insert(id.clone());
        }
        documents.push(Document::new(id, body, label));
    }
    if report.malformed > 0 {
        log::warn!("skipped {} malformed CSV rows", report.malformed);
    }
    if documents.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok((Corpus::new(documents), report))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanupReport {
    pub removed_empty: usize,
    pub removed_duplicates: usize,
}

impl CleanupReport {
    pub fn total_removed(&self) -> usize {
        self.removed_empty + self.removed_duplicates
    }
}

/// Case-folded, whitespace-collapsed text. Two documents with the same key are duplicates.
pub fn dedup_key(text: &str) -> String {
    let mut key = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !key.is_empty() {
            key.push(' ');
        }
        key.extend(word.chars().flat_map(char::to_lowercase));
    }
    key
}

/// Drops empty documents and duplicates (first occurrence wins).
pub fn dedupe_and_clean(corpus: Corpus) -> (Corpus, CleanupReport) {
    let mut report = CleanupReport::default();
    let mut seen = HashSet::with_capacity(corpus.documents.len());
    let provenance = corpus.provenance;
    let documents = corpus
        .documents
        .into_iter()
        .filter(|doc| {
            let key = dedup_key(&doc.text);
            if key.is_empty() {
                report.removed_empty += 1;
                false
            } else if !seen.insert(key) {
                report.removed_duplicates += 1;
                false
            } else {
                true
            }
        })
        .collect();
    (
        Corpus {
            documents,
            provenance,
        },
        report,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 42,
        }
    }
}

/// Seeded global shuffle followed by a cut at `round(train_fraction * N)`.
pub fn split(corpus: &Corpus, spec: SplitSpec) -> Result<(Corpus, Corpus), CorpusError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(spec.train_fraction));
    }
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let n = corpus.len();
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(CorpusError::DegenerateSplit {
            train: n_train,
            test: n - n_train,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let pick = |idx: &[usize]| Corpus {
        documents: idx.iter().map(|&i| corpus.documents[i].clone()).collect(),
        provenance: corpus.provenance.clone(),
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, text, Some(Label::Suicide))
    }

    #[test]
    fn parses_three_labeled_rows() {
        let csv = "text,class\nI want to die,suicide\ngreat game today,non-suicide\n\"hello, world\",SUICIDE\n";
        let (corpus, report) = parse_csv(csv.as_bytes(), "text", Some("class")).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(report.rows_read, 3);
        assert_eq!(corpus.documents[2].text, "hello, world");
        assert_eq!(corpus.documents[2].label, Some(Label::Suicide));
        assert_eq!(corpus.documents[1].label, Some(Label::NonSuicide));
        assert_eq!(corpus.label_counts(), (2, 1, 0));
    }

    #[test]
    fn empty_text_row_is_dropped() {
        let csv = "text,class\nfine,suicide\n   ,non-suicide\nok,non-suicide\n";
        let (corpus, report) = parse_csv(csv.as_bytes(), "text", Some("class")).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(report.dropped_empty, 1);
    }

    #[test]
    fn missing_column_is_reported() {
        let csv = "body,class\nx,suicide\n";
        let err = parse_csv(csv.as_bytes(), "text", Some("class")).unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn(c) if c == "text"));
        let err = parse_csv("text\nx\n".as_bytes(), "text", Some("class")).unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn(c) if c == "class"));
    }

    #[test]
    fn unknown_label_fails_fast() {
        let csv = "text,class\nx,maybe\n";
        let err = parse_csv(csv.as_bytes(), "text", Some("class")).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownLabel { row: 1, .. }));
    }

    #[test]
    fn short_rows_are_counted_not_fatal() {
        let csv = "id,text,class\n1,a,suicide\n2\n3,c,non-suicide\n";
        let (corpus, report) = parse_csv(csv.as_bytes(), "text", Some("class")).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(report.malformed, 1);
    }

    #[test]
    fn all_empty_is_empty_corpus() {
        let csv = "text\n \n\t\n";
        assert!(matches!(
            parse_csv(csv.as_bytes(), "text", None),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn invalid_utf8_is_replaced() {
        let mut bytes = b"text\nbad ".to_vec();
        bytes.push(0xff);
        bytes.extend_from_slice(b" byte\n");
        let (corpus, _) = parse_csv(&bytes, "text", None).unwrap();
        assert_eq!(corpus.documents[0].text, "bad \u{fffd} byte");
        assert_eq!(corpus.documents[0].label, None);
    }

    #[test]
    fn identical_text_dedupes_to_one() {
        let corpus = Corpus::new(vec![doc("a", "I feel  Sad"), doc("b", "i feel sad "), doc("c", "other")]);
        let (out, report) = dedupe_and_clean(corpus);
        assert_eq!(out.len(), 2);
        assert_eq!(out.documents[0].id, "a");
        assert_eq!(report.removed_duplicates, 1);
    }

    #[test]
    fn no_duplicates_is_identity() {
        let corpus = Corpus::new(vec![doc("a", "one"), doc("b", "two")]);
        let (out, report) = dedupe_and_clean(corpus.clone());
        assert_eq!(out, corpus);
        assert_eq!(report, CleanupReport::default());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let corpus = Corpus::new((0..10).map(|i| doc(&i.to_string(), &format!("t{i}"))).collect());
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 7,
        };
        let (train, test) = split(&corpus, spec).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let (train2, test2) = split(&corpus, spec).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let mut ids: Vec<_> = train.documents.iter().chain(&test.documents).map(|d| d.id.clone()).collect();
        ids.sort();
        let mut expected: Vec<_> = (0..10).map(|i| i.to_string()).collect();
        expected.sort();
        assert_eq!(ids, expected);
    }

    #[test]
    fn degenerate_split_rejected() {
        let corpus = Corpus::new(vec![doc("a", "x"), doc("b", "y")]);
        let spec = SplitSpec {
            train_fraction: 0.9,
            seed: 1,
        };
        assert!(matches!(split(&corpus, spec), Err(CorpusError::DegenerateSplit { .. })));
        let bad = SplitSpec {
            train_fraction: 1.0,
            seed: 1,
        };
        assert!(matches!(split(&corpus, bad), Err(CorpusError::InvalidFraction(_))));
    }
}
