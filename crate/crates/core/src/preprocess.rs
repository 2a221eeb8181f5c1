//! Text normalization: filter, tokenize, stopword removal, lemmatization.
//!
//! The shipped English tables live in `data/` and are compiled in; any of
//! them can be replaced with a file of the same format at runtime.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const STOPWORDS: &str = include_str!("../data/stopwords.txt");
const CONTRACTIONS: &str = include_str!("../data/contractions.tsv");
const LEMMA_EXCEPTIONS: &str = include_str!("../data/lemma_exceptions.tsv");
const SUFFIX_RULES: &str = include_str!("../data/suffix_rules.tsv");

/// Extra passes allowed beyond the token length before giving up on a
/// cyclic exception table.
const MAX_LEMMA_PASSES: usize = 8;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{table} line {line}: {message}")]
    Parse {
        table: &'static str,
        line: usize,
        message: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuffixRule {
    pub suffix: String,
    pub replacement: String,
    pub min_stem: usize,
}

impl SuffixRule {
    fn apply(&self, token: &str) -> Option<String> {
        let stem = token.strip_suffix(self.suffix.as_str())?;
        if stem.chars().count() < self.min_stem {
            return None;
        }
        Some(format!("{stem}{}", self.replacement))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub stopwords: BTreeSet<String>,
    pub contractions: BTreeMap<String, String>,
    pub lemma_exceptions: BTreeMap<String, String>,
    /// Applied in order; the first rule whose suffix matches and whose stem
    /// guard passes wins.
    pub suffix_rules: Vec<SuffixRule>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self::english()
    }
}

impl PreprocessConfig {
    /// The compiled-in English tables.
    pub fn english() -> Self {
        static SHIPPED: OnceLock<PreprocessConfig> = OnceLock::new();
        SHIPPED
            .get_or_init(|| {
                Self::from_sources(STOPWORDS, CONTRACTIONS, LEMMA_EXCEPTIONS, SUFFIX_RULES)
                    .expect("shipped preprocessing tables are well formed")
            })
            .clone()
    }

    pub fn from_sources(
        stopwords: &str,
        contractions: &str,
        exceptions: &str,
        suffix_rules: &str,
    ) -> Result<Self, ConfigError> {
        Ok(Self {
            stopwords: parse_word_list(stopwords),
            contractions: parse_pairs(contractions, "contractions")?,
            lemma_exceptions: parse_pairs(exceptions, "lemma exceptions")?,
            suffix_rules: parse_rules(suffix_rules)?,
        })
    }

    /// Replaces individual tables with file contents; `None` keeps the current table.
    pub fn with_files(
        mut self,
        stopwords: Option<&Path>,
        contractions: Option<&Path>,
        exceptions: Option<&Path>,
        suffix_rules: Option<&Path>,
    ) -> Result<Self, ConfigError> {
        if let Some(p) = stopwords {
            self.stopwords = parse_word_list(&std::fs::read_to_string(p)?);
        }
        if let Some(p) = contractions {
            self.contractions = parse_pairs(&std::fs::read_to_string(p)?, "contractions")?;
        }
        if let Some(p) = exceptions {
            self.lemma_exceptions = parse_pairs(&std::fs::read_to_string(p)?, "lemma exceptions")?;
        }
        if let Some(p) = suffix_rules {
            self.suffix_rules = parse_rules(&std::fs::read_to_string(p)?)?;
        }
        Ok(self)
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// SHA-256 over a canonical rendering of all four tables, hex encoded.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for word in &self.stopwords {
            hasher.update(b"s\t");
            hasher.update(word.as_bytes());
            hasher.update(b"\n");
        }
        for (k, v) in &self.contractions {
            hasher.update(format!("c\t{k}\t{v}\n").as_bytes());
        }
        for (k, v) in &self.lemma_exceptions {
            hasher.update(format!("e\t{k}\t{v}\n").as_bytes());
        }
        for rule in &self.suffix_rules {
            hasher.update(format!("r\t{}\t{}\t{}\n", rule.suffix, rule.replacement, rule.min_stem).as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

fn content_lines(src: &str) -> impl Iterator<Item = (usize, &str)> {
    src.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_word_list(src: &str) -> BTreeSet<String> {
    content_lines(src).map(|(_, l)| l.trim().to_lowercase()).collect()
}

fn parse_pairs(src: &str, table: &'static str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (line, text) in content_lines(src) {
        let err = |message: &str| ConfigError::Parse {
            table,
            line,
            message: message.to_string(),
        };
        let (key, value) = text.split_once('\t').ok_or_else(|| err("expected two tab-separated fields"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(err("empty field"));
        }
        if key != key.to_lowercase() {
            return Err(err("keys must be lowercase"));
        }
        out.insert(key.to_string(), value.to_string());
    }
    Ok(out)
}

fn parse_rules(src: &str) -> Result<Vec<SuffixRule>, ConfigError> {
    let mut rules = Vec::new();
    for (line, text) in content_lines(src) {
        let err = |message: String| ConfigError::Parse {
            table: "suffix rules",
            line,
            message,
        };
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let suffix = fields[0].trim().to_string();
        if suffix.is_empty() {
            return Err(err("empty suffix".into()));
        }
        let replacement = fields[1].trim().to_string();
        let min_stem = fields[2]
            .trim()
            .parse()
            .map_err(|e| err(format!("bad min_stem: {e}")))?;
        if replacement != suffix && replacement.len() >= suffix.len() {
            return Err(err("replacement must be shorter than its suffix".into()));
        }
        if min_stem == 0 && replacement.is_empty() {
            return Err(err("rule could produce an empty token".into()));
        }
        rules.push(SuffixRule {
            suffix,
            replacement,
            min_stem,
        });
    }
    Ok(rules)
}

/// Ordered list of lowercase terms drawn from one document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    pub source_id: String,
}

impl TokenSeq {
    pub fn new(tokens: Vec<String>, source_id: impl Into<String>) -> Self {
        Self {
            tokens,
            source_id: source_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:https?://|www\.)\S*").unwrap())
}

fn contraction_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{Alphabetic}\p{N}]+(?:'[\p{Alphabetic}\p{N}]+)+").unwrap())
}

/// Case-folds, expands contractions, strips URLs, `#`/`@` marks and every
/// other non-alphanumeric symbol, then collapses whitespace.
pub fn filter_text(raw: &str, config: &PreprocessConfig) -> String {
    let folded: String = raw
        .chars()
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' | '\u{02bc}' => '\'',
            c => c,
        })
        .flat_map(char::to_lowercase)
        .collect();

    let expanded = contraction_pattern().replace_all(&folded, |caps: &regex::Captures<'_>| {
        let word = &caps[0];
        config
            .contractions
            .get(word)
            .cloned()
            .unwrap_or_else(|| word.to_string())
    });

    let without_urls = url_pattern().replace_all(&expanded, " ");

    let mut out = String::with_capacity(without_urls.len());
    let mut pending_space = false;
    for c in without_urls.chars() {
        if c == '\'' || c == '#' || c == '@' {
            continue;
        }
        if c.is_alphanumeric() && !c.is_uppercase() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Splits filtered text on Unicode whitespace.
pub fn tokenize(cleaned: &str, source_id: &str) -> TokenSeq {
    TokenSeq::new(
        cleaned.split_whitespace().map(str::to_string).collect(),
        source_id,
    )
}

pub fn remove_stopwords(tokens: TokenSeq, config: &PreprocessConfig) -> TokenSeq {
    TokenSeq {
        tokens: tokens
            .tokens
            .into_iter()
            .filter(|t| !config.is_stopword(t))
            .collect(),
        source_id: tokens.source_id,
    }
}

/// One lookup: exception table first, then the first matching suffix rule.
pub fn lemmatize_once(token: &str, config: &PreprocessConfig) -> String {
    if let Some(lemma) = config.lemma_exceptions.get(token) {
        return lemma.clone();
    }
    config
        .suffix_rules
        .iter()
        .find_map(|rule| rule.apply(token))
        .filter(|t| !t.is_empty())
        .unwrap_or_else(|| token.to_string())
}

/// Lemmatizes one token, repeating the lookup until the form is stable
/// (so "killings" becomes "kill" rather than "killing").
pub fn lemmatize_token(token: &str, config: &PreprocessConfig) -> String {
    let mut current = token.to_string();
    for _ in 0..token.len() + MAX_LEMMA_PASSES {
        let next = lemmatize_once(&current, config);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

pub fn lemmatize(tokens: TokenSeq, config: &PreprocessConfig) -> TokenSeq {
    TokenSeq {
        tokens: tokens
            .tokens
            .iter()
            .map(|t| lemmatize_token(t, config))
            .collect(),
        source_id: tokens.source_id,
    }
}

/// Full pipeline. Lemmas that land on a stopword are dropped as well, which
/// keeps the pipeline idempotent on its own re-joined output.
pub fn preprocess(raw: &str, source_id: &str, config: &PreprocessConfig) -> TokenSeq {
    let filtered = filter_text(raw, config);
    let tokens = tokenize(&filtered, source_id);
    let tokens = remove_stopwords(tokens, config);
    let tokens = lemmatize(tokens, config);
    remove_stopwords(tokens, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig::english()
    }

    fn seq(words: &[&str]) -> TokenSeq {
        TokenSeq::new(words.iter().map(|s| s.to_string()).collect(), "t")
    }

    #[test]
    fn expands_known_contractions() {
        assert_eq!(filter_text("let's", &cfg()), "let us");
        assert_eq!(filter_text("didn't", &cfg()), "did not");
        assert_eq!(filter_text("I DIDN\u{2019}T go", &cfg()), "i did not go");
    }

    #[test]
    fn filter_applies_rules_in_order() {
        assert_eq!(filter_text("I feel SAD!! https://t.co/x #help", &cfg()), "i feel sad help");
        assert_eq!(filter_text("@friend see www.example.com now", &cfg()), "friend see now");
        assert_eq!(filter_text("cost: $5 (100%)", &cfg()), "cost 5 100");
        assert_eq!(filter_text("  \t \n", &cfg()), "");
        assert_eq!(filter_text("so tired \u{1F622}\u{1F622} of it", &cfg()), "so tired of it");
    }

    #[test]
    fn tokenize_splits_on_whitespace() {
        assert_eq!(tokenize("i feel sad", "d").tokens, vec!["i", "feel", "sad"]);
        assert!(tokenize("", "d").is_empty());
        assert_eq!(tokenize("a  b", "d").tokens, vec!["a", "b"]);
        assert_eq!(tokenize("x", "doc-7").source_id, "doc-7");
    }

    #[test]
    fn stopword_removal_is_set_difference() {
        let mut small = cfg();
        small.stopwords = ["i", "to"].iter().map(|s| s.to_string()).collect();
        let out = remove_stopwords(seq(&["i", "want", "to", "die"]), &small);
        assert_eq!(out.tokens, vec!["want", "die"]);
        assert!(remove_stopwords(seq(&[]), &small).is_empty());
        let keep = seq(&["want", "die"]);
        assert_eq!(remove_stopwords(keep.clone(), &small), keep);
    }

    #[test]
    fn shipped_stoplist_covers_examples() {
        let c = cfg();
        for word in ["she", "he", "and", "the", "a", "an", "on", "of", "to", "but", "for"] {
            assert!(c.is_stopword(word), "{word}");
        }
        assert!(c.stopwords.len() >= 140);
        assert!(c.contractions.len() >= 85);
    }

    #[test]
    fn lemmatizer_rules_and_exceptions() {
        let c = cfg();
        // "ying" -> "y" with stem "cr" (length 2 meets the guard of 2)
        assert_eq!(lemmatize_token("crying", &c), "cry");
        assert_eq!(lemmatize_token("feet", &c), "foot");
        assert_eq!(lemmatize_token("sad", &c), "sad");
        assert_eq!(lemmatize_token("cries", &c), "cry");
        assert_eq!(lemmatize_token("wanted", &c), "want");
        assert_eq!(lemmatize_token("friends", &c), "friend");
        assert_eq!(lemmatize_token("needed", &c), "need");
        assert_eq!(lemmatize_token("stress", &c), "stress");
        assert_eq!(lemmatize_token("wishes", &c), "wish");
        assert_eq!(lemmatize_token("killings", &c), "kill");
        assert_eq!(lemmatize_token("dying", &c), "die");
        assert_eq!(lemmatize_token("nothing", &c), "nothing");
        // stem guards keep short words intact
        assert_eq!(lemmatize_token("was", &c), "was");
        assert_eq!(lemmatize_token("bed", &c), "bed");
        assert_eq!(lemmatize_token("sing", &c), "sing");
    }

    #[test]
    fn exception_targets_are_stable() {
        let c = cfg();
        for lemma in c.lemma_exceptions.values() {
            assert_eq!(&lemmatize_once(lemma, &c), lemma, "exception target {lemma} is not a fixpoint");
        }
    }

    #[test]
    fn rule_table_validation() {
        assert!(parse_rules("ing\tingo\t2\n").is_err());
        assert!(parse_rules("s\t\t0\n").is_err());
        assert!(parse_rules("s\t\n").is_err());
        assert!(parse_pairs("Don't\tdo not\n", "contractions").is_err());
        assert_eq!(parse_rules("# c\nies\ty\t2\n").unwrap().len(), 1);
    }

    #[test]
    fn full_pipeline() {
        let out = preprocess("I just want to die, I'm crying so hard... https://x.co #sad", "p1", &cfg());
        assert_eq!(out.tokens, vec!["want", "die", "cry", "hard", "sad"]);
        assert_eq!(out.source_id, "p1");
    }

    #[test]
    fn digest_tracks_table_changes() {
        let a = cfg();
        let mut b = cfg();
        assert_eq!(a.digest(), b.digest());
        b.stopwords.insert("zebra".into());
        assert_ne!(a.digest(), b.digest());
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        let pieces = prop::sample::select(vec![
            "I", "feel", "SAD", "didn't", "let's", "crying", "friends", "http://t.co/ab", "#help", "@bob",
            "!!", "...", "killings", "the", "want", "to", "die", "caf\u{e9}", "\u{1F622}", "42", "don't",
            "www.x.org", "tired", "lives", "I'm", "stresses", "ΣΟΦΙΑ", "-", "\t", "tries",
        ]);
        prop::collection::vec(pieces, 0..24).prop_map(|v| v.join(" "))
    }

    proptest! {
        #[test]
        fn filter_output_is_lowercase_alnum_single_spaced(s in text_strategy(), junk in "\\PC{0,40}") {
            for input in [s.as_str(), junk.as_str()] {
                let out = filter_text(input, &cfg());
                prop_assert!(!out.starts_with(' ') && !out.ends_with(' '));
                prop_assert!(!out.contains("  "));
                prop_assert!(out.chars().all(|c| c == ' ' || (c.is_alphanumeric() && !c.is_uppercase())));
            }
        }

        #[test]
        fn pipeline_is_idempotent(s in text_strategy(), junk in "[a-zA-Z' ]{0,60}") {
            let c = cfg();
            for input in [s.as_str(), junk.as_str()] {
                let once = preprocess(input, "x", &c);
                let twice = preprocess(&once.joined(), "x", &c);
                prop_assert_eq!(&once, &twice);
                prop_assert!(once.tokens.iter().all(|t| !t.is_empty() && !t.contains(char::is_whitespace)));
            }
        }

        #[test]
        fn lemmatize_never_lengthens(words in prop::collection::vec("[a-z]{1,12}", 0..20)) {
            let c = cfg();
            let input = TokenSeq::new(words, "x");
            let n = input.len();
            let out = lemmatize(input, &c);
            prop_assert_eq!(out.len(), n);
            prop_assert!(out.tokens.iter().all(|t| !t.is_empty()));
        }
    }
}
