//! Synthetic sentiment-word corruption: a reproducible stand-in for ASR
//! substitution errors, with a ground-truth log so audits can be checked
//! against what was actually injected.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DatasetSplit;
use crate::error::SwrmError;
use crate::lexicon::{normalize, Lexicon};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionPolicy {
    /// Drop a leading character cluster, mimicking a clipped recognition
    /// ("upset" heard as "set").
    PhoneticTruncate,
    /// Replace with an unrelated neutral filler word.
    RandomVocab,
}

impl FromStr for CorruptionPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phonetic-truncate" => Ok(CorruptionPolicy::PhoneticTruncate),
            "random-vocab" => Ok(CorruptionPolicy::RandomVocab),
            other => Err(format!("unknown corruption policy '{other}'")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CorruptionSpec {
    /// Fraction of lexicon-bearing utterances to corrupt.
    pub rate: f64,
    pub policy: CorruptionPolicy,
}

/// One injected substitution, as written to the ground-truth log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub id: String,
    pub position: usize,
    pub original: String,
    pub replacement: String,
}

/// Replace exactly one sentiment word in `round(rate * eligible)` utterances,
/// where an utterance is eligible if it contains at least one lexicon word.
/// Every output utterance carries `gold_tokens` (the pre-corruption
/// transcript) so the result is auditable end to end; if the rounded count is
/// zero the input passes through untouched.
pub fn corrupt_sentiment_words(
    split: &DatasetSplit,
    lexicon: &Lexicon,
    spec: &CorruptionSpec,
    seed: u64,
) -> Result<(DatasetSplit, Vec<CorruptionRecord>), SwrmError> {
    if !(0.0..=1.0).contains(&spec.rate) {
        return Err(SwrmError::Config(format!(
            "corruption rate {} outside [0, 1]",
            spec.rate
        )));
    }
    if split.is_empty() {
        return Err(SwrmError::Config("cannot corrupt an empty dataset".into()));
    }

    let eligible: Vec<usize> = split
        .utterances
        .iter()
        .enumerate()
        .filter(|(_, u)| u.tokens.iter().any(|t| lexicon.contains(t)))
        .map(|(i, _)| i)
        .collect();
    let n_corrupt = (spec.rate * eligible.len() as f64).round() as usize;
    if n_corrupt == 0 {
        return Ok((split.clone(), Vec::new()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = eligible;
    chosen.shuffle(&mut rng);
    chosen.truncate(n_corrupt);
    chosen.sort_unstable();

    let mut out = split.clone();
    let mut records = Vec::with_capacity(n_corrupt);
    let mut pick = chosen.into_iter().peekable();
    for (i, utt) in out.utterances.iter_mut().enumerate() {
        utt.gold_tokens = Some(utt.tokens.clone());
        if pick.peek() != Some(&i) {
            continue;
        }
        pick.next();
        let positions: Vec<usize> = utt
            .tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| lexicon.contains(t))
            .map(|(p, _)| p)
            .collect();
        let position = positions[rng.gen_range(0..positions.len())];
        let original = utt.tokens[position].clone();
        let replacement = match spec.policy {
            CorruptionPolicy::PhoneticTruncate => phonetic_truncate(&original, lexicon),
            CorruptionPolicy::RandomVocab => random_filler(&mut rng, &original, lexicon),
        };
        utt.tokens[position] = replacement.clone();
        records.push(CorruptionRecord {
            id: utt.id.clone(),
            position,
            original,
            replacement,
        });
    }
    Ok((out, records))
}

fn is_vowel(c: char) -> bool {
    matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u')
}

fn is_consonant(c: char) -> bool {
    c.is_alphabetic() && !is_vowel(c)
}

/// Strip the shortest leading cluster such that the remainder starts with a
/// consonant-vowel onset ("upset" → "set"); fall back to dropping a single
/// character when no such onset exists.
fn truncate_once(word: &str) -> String {
    let chars: Vec<char> = word.chars().collect();
    for j in 1..chars.len().saturating_sub(1) {
        if is_consonant(chars[j]) && is_vowel(chars[j + 1]) {
            return chars[j..].iter().collect();
        }
    }
    chars.iter().skip(1).collect()
}

fn phonetic_truncate(word: &str, lexicon: &Lexicon) -> String {
    let original_polarity = lexicon.polarity_of(word);
    let mut current = word.to_string();
    loop {
        let next = truncate_once(&current);
        if next.is_empty() {
            return "uh".to_string();
        }
        // A truncation that lands on another sentiment word of the same
        // polarity hasn't corrupted anything; keep shaving.
        if lexicon.polarity_of(&next) == original_polarity {
            current = next;
            continue;
        }
        return next;
    }
}

const NEUTRAL_FILLERS: &[&str] = &[
    "the", "and", "but", "with", "just", "that", "this", "from", "have", "about", "there",
    "would", "could", "really", "thing", "stuff", "kind", "sort", "well", "also", "some",
    "very", "then", "them", "been", "into", "over", "only", "other", "because",
];

fn random_filler(rng: &mut ChaCha8Rng, original: &str, lexicon: &Lexicon) -> String {
    let original_key = normalize(original);
    let candidates: Vec<&str> = NEUTRAL_FILLERS
        .iter()
        .copied()
        .filter(|w| !lexicon.contains(w) && normalize(w) != original_key)
        .collect();
    if candidates.is_empty() {
        return "uh".to_string();
    }
    candidates[rng.gen_range(0..candidates.len())].to_string()
}
