use std::num::NonZeroUsize;

use ideation_core::preprocess::PreprocessConfig;
use lru::LruCache;
use serde::{Deserialize, Serialize};

use crate::config::{FilterConfig, LanguageFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropReason {
    Retweet,
    Duplicate,
    Keyword,
    Language,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Retweet => "retweet",
            DropReason::Duplicate => "duplicate",
            DropReason::Keyword => "keyword",
            DropReason::Language => "language",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Drop(DropReason),
}

/// Frequent English words that are not on the stopword list.
const COMMON_WORDS: &[&str] = &[
    "feel", "want", "die", "kill", "life", "know", "like", "time", "people", "good", "love", "day", "think",
    "really", "going", "get", "got", "one", "make", "go", "see", "need", "never", "always", "today", "tonight",
    "anymore", "anyone", "everyone", "nobody", "help", "sad", "happy", "tired", "alone", "friend", "friends",
    "family", "work", "school", "home", "night", "year", "years", "thing", "things", "way", "much", "back",
    "still", "even", "new", "say", "said", "tell", "feeling", "feels", "hate", "sorry", "thank",
    "thanks", "please", "right", "well", "bad", "better", "last", "long", "little", "world", "man",
];

pub fn english_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic() && c != '\'')
        .map(|w| w.trim_matches('\'').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// True when at least half the alphabetic tokens are stopwords or common English words.
pub fn looks_english(text: &str, stopwords: &PreprocessConfig) -> bool {
    let tokens = english_tokens(text);
    if tokens.is_empty() {
        return false;
    }
    let hits = tokens
        .iter()
        .filter(|t| stopwords.is_stopword(t) || COMMON_WORDS.contains(&t.as_str()))
        .count();
    2 * hits >= tokens.len()
}

/// Stateful: the duplicate check remembers recently kept texts.
pub struct StreamFilter {
    config: FilterConfig,
    keywords: Vec<String>,
    recent: Option<LruCache<String, ()>>,
    stopwords: PreprocessConfig,
}

impl StreamFilter {
    pub fn new(config: FilterConfig) -> Self {
        let recent = NonZeroUsize::new(config.dedupe_window).map(LruCache::new);
        let keywords = config.keywords.iter().map(|k| k.to_lowercase()).collect();
        Self {
            config,
            keywords,
            recent,
            stopwords: PreprocessConfig::english().clone(),
        }
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn check(&mut self, text: &str) -> Verdict {
        if self.config.drop_retweets && text.starts_with("RT ") {
            return Verdict::Drop(DropReason::Retweet);
        }
        if let Some(recent) = &mut self.recent {
            let digest = ideation_core::store::digest_bytes(text.as_bytes());
            if recent.put(digest, ()).is_some() {
                return Verdict::Drop(DropReason::Duplicate);
            }
        }
        if !self.keywords.is_empty() {
            let lower = text.to_lowercase();
            if !self.keywords.iter().any(|k| lower.contains(k.as_str())) {
                return Verdict::Drop(DropReason::Keyword);
            }
        }
        if self.config.language == LanguageFilter::EnglishHeuristic && !looks_english(text, &self.stopwords) {
            return Verdict::Drop(DropReason::Language);
        }
        Verdict::Keep
    }
}
