//! Seeded generator for labeled posts with the rough texture of the
//! suicide-watch corpus. Used for fixtures, demos and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Label};

const SUICIDE_WORDS: &[&str] = &[
    "want", "die", "end", "life", "kill", "myself", "pain", "alone", "hopeless", "tired", "living", "anymore",
    "worthless", "suicide", "suicidal", "pills", "gone", "burden", "nobody", "hate", "cry", "dark", "numb",
    "goodbye", "overdose", "empty", "hurt", "depressed", "escape", "sorry", "failure", "lost", "broken",
    "therapist", "scared", "tonight", "rope", "bridge", "belong", "deserve",
];

const NEUTRAL_WORDS: &[&str] = &[
    "game", "school", "movie", "lol", "music", "pizza", "dog", "weekend", "party", "class", "teacher", "funny",
    "song", "video", "phone", "birthday", "homework", "girlfriend", "boyfriend", "anime", "meme", "football",
    "dinner", "summer", "play", "watch", "crush", "discord", "minecraft", "netflix", "cat", "coffee", "beach",
    "guitar", "cake", "drive", "shopping", "holiday", "exam", "concert",
];

const SHARED_WORDS: &[&str] = &[
    "friend", "think", "feel", "know", "people", "time", "really", "thing", "day", "year", "family",
    "mom", "dad", "good", "bad", "work", "night", "help", "talk", "love", "week", "tell", "need", "though",
    "today", "guy", "way", "something", "money", "sleep", "home", "start", "try",
];

const FILLER: &[&str] = &[
    "i", "i'm", "my", "the", "to", "and", "a", "it", "just", "so", "like", "is", "of", "in", "me", "that", "but",
    "don't", "can't", "be", "have", "for", "this", "with", "was", "not", "all", "im", "even",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_docs: usize,
    pub positive_fraction: f64,
    /// Chance that a content word is drawn from the document's class pool.
    pub signal: f64,
    /// Fraction of documents whose label is flipped after generation.
    pub label_noise: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_docs: 1000,
            positive_fraction: 0.5,
            signal: 0.45,
            label_noise: 0.03,
            min_words: 6,
            max_words: 30,
            seed: 7,
        }
    }
}

/// One post of the requested class.
pub fn synth_text(rng: &mut impl Rng, label: Label, spec: &SynthSpec) -> String {
    let pool = match label {
        Label::Suicide => SUICIDE_WORDS,
        Label::NonSuicide => NEUTRAL_WORDS,
    };
    let n = rng.gen_range(spec.min_words.max(1)..=spec.max_words.max(spec.min_words.max(1)));
    let mut words: Vec<String> = Vec::with_capacity(n);
    for k in 0..n {
        let w = if rng.gen_bool(0.4) {
            *FILLER.choose(rng).unwrap()
        } else if rng.gen_bool(spec.signal.clamp(0.0, 1.0)) {
            *pool.choose(rng).unwrap()
        } else {
            *SHARED_WORDS.choose(rng).unwrap()
        };
        let mut w = w.to_string();
        if k == 0 || rng.gen_bool(0.05) {
            if let Some(first) = w.get(..1) {
                w = first.to_uppercase() + &w[1..];
            }
        }
        words.push(w);
    }
    let mut text = words.join(" ");
    text.push_str(match rng.gen_range(0..6) {
        0 => "...",
        1 => "!",
        2 => "?",
        3 => " :(",
        _ => ".",
    });
    text
}

/// Deterministic labeled corpus; ids are `s1`, `s2`, ...
pub fn synth_corpus(spec: &SynthSpec) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let documents = (0..spec.num_docs)
        .map(|i| {
            let label = if rng.gen_bool(spec.positive_fraction.clamp(0.0, 1.0)) {
                Label::Suicide
            } else {
                Label::NonSuicide
            };
            let text = synth_text(&mut rng, label, spec);
            let observed = if rng.gen_bool(spec.label_noise.clamp(0.0, 1.0)) {
                match label {
                    Label::Suicide => Label::NonSuicide,
                    Label::NonSuicide => Label::Suicide,
                }
            } else {
                label
            };
            Document {
                id: format!("s{}", i + 1),
                text,
                label: Some(observed),
            }
        })
        .collect();
    Corpus {
        documents,
        provenance: None,
    }
}

/// Distinct posts of which exactly `positives` are classified positive by `classify`,
/// shuffled. Candidates of each class are drawn until both quotas are met.
pub fn engineered_lines(
    classify: impl Fn(&str) -> u8,
    positives: usize,
    total: usize,
    seed: u64,
) -> Result<Vec<String>, String> {
    if positives > total {
        return Err(format!("{positives} positives cannot fit in {total} lines"));
    }
    let spec = SynthSpec {
        seed,
        ..SynthSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    let negatives = total - positives;
    let budget = 200 * total + 10_000;
    for _ in 0..budget {
        if pos.len() == positives && neg.len() == negatives {
            break;
        }
        let want = if pos.len() < positives && (neg.len() == negatives || rng.gen_bool(0.5)) {
            Label::Suicide
        } else {
            Label::NonSuicide
        };
        let text = synth_text(&mut rng, want, &spec);
        if !seen.insert(text.clone()) {
            continue;
        }
        match classify(&text) {
            1 if pos.len() < positives => pos.push(text),
            0 if neg.len() < negatives => neg.push(text),
            _ => {}
        }
    }
    if pos.len() < positives || neg.len() < negatives {
        return Err(format!(
            "classifier yielded only {}/{positives} positive and {}/{negatives} negative lines",
            pos.len(),
            neg.len()
        ));
    }
    let mut lines = pos;
    lines.extend(neg);
    lines.shuffle(&mut rng);
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let spec = SynthSpec {
            num_docs: 50,
            ..SynthSpec::default()
        };
        let a = synth_corpus(&spec);
        assert_eq!(a.documents.len(), 50);
        assert_eq!(a, synth_corpus(&spec));
        assert_ne!(a, synth_corpus(&SynthSpec { seed: 8, ..spec }));
    }
}
