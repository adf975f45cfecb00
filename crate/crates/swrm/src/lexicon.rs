//! Sentiment lexicons: polarity-tagged word lists consulted when scoring
//! masked-LM candidates and when picking corruption targets.
//!
//! File format is one entry per line, `word` or `word polarity` separated by
//! whitespace (a tab, conventionally). Lines starting with `;` and blank
//! lines are skipped. A bare
//! word defaults to positive; polarity accepts `positive`/`negative` and the
//! abbreviations `pos`/`neg`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::SwrmError;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarity::Positive => write!(f, "positive"),
            Polarity::Negative => write!(f, "negative"),
        }
    }
}

impl Polarity {
    fn parse(s: &str) -> Option<Polarity> {
        match s.to_ascii_lowercase().as_str() {
            "positive" | "pos" => Some(Polarity::Positive),
            "negative" | "neg" => Some(Polarity::Negative),
            _ => None,
        }
    }
}

/// Canonical lookup form of a token: lowercased, with non-alphanumeric
/// characters trimmed from both ends. Wordpiece continuations (`##` prefix)
/// never match a lexicon entry, so they normalize to `None`, as do tokens
/// that are empty after trimming (bare punctuation).
pub fn normalize(token: &str) -> Option<String> {
    if token.starts_with("##") {
        return None;
    }
    let lowered = token.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_string())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, Polarity>,
}

impl Lexicon {
    /// Parse one lexicon file's worth of lines. `source` names the input in
    /// error messages.
    pub fn parse(lines: &str, source: &str) -> Result<Self, SwrmError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in lines.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("non-empty line has a first field");
            let polarity = match fields.next() {
                None => Polarity::Positive,
                Some(tag) => Polarity::parse(tag).ok_or_else(|| {
                    SwrmError::Lexicon(format!(
                        "{source}:{}: unknown polarity '{tag}'",
                        lineno + 1
                    ))
                })?,
            };
            if let Some(extra) = fields.next() {
                return Err(SwrmError::Lexicon(format!(
                    "{source}:{}: unexpected trailing field '{extra}'",
                    lineno + 1
                )));
            }
            let Some(key) = normalize(word) else {
                return Err(SwrmError::Lexicon(format!(
                    "{source}:{}: '{word}' normalizes to nothing",
                    lineno + 1
                )));
            };
            if let Some(prev) = entries.insert(key.clone(), polarity) {
                if prev != polarity {
                    log::warn!("{source}:{}: '{key}' re-tagged {prev} -> {polarity}", lineno + 1);
                }
            }
        }
        Ok(Lexicon { entries })
    }

    /// Load and merge several lexicon files. On conflicting polarities the
    /// later file wins; merging nothing or only empty files is an error.
    pub fn from_files<P: AsRef<Path>>(paths: &[P]) -> Result<Self, SwrmError> {
        let mut merged = Lexicon::default();
        for path in paths {
            let path = path.as_ref();
            let text = fs::read_to_string(path).map_err(|e| SwrmError::io(path, e))?;
            let part = Lexicon::parse(&text, &path.display().to_string())?;
            for (word, polarity) in part.entries {
                if let Some(prev) = merged.entries.insert(word.clone(), polarity) {
                    if prev != polarity {
                        log::warn!(
                            "lexicon merge: '{word}' re-tagged {prev} -> {polarity} by {}",
                            path.display()
                        );
                    }
                }
            }
        }
        if merged.entries.is_empty() {
            return Err(SwrmError::Lexicon(
                "merged lexicon is empty; provide at least one non-empty word list".into(),
            ));
        }
        Ok(merged)
    }

    /// A small general-purpose sentiment vocabulary used when no lexicon
    /// files are supplied on the command line.
    pub fn builtin() -> Self {
        const POSITIVE: &[&str] = &[
            "good", "great", "happy", "love", "loved", "like", "liked", "best", "better",
            "amazing", "awesome", "wonderful", "excellent", "enjoy", "enjoyed", "enjoyable",
            "fantastic", "beautiful", "perfect", "fun", "funny", "nice", "glad", "excited",
            "exciting", "brilliant", "favorite", "impressive", "pleased", "delightful",
        ];
        const NEGATIVE: &[&str] = &[
            "bad", "worse", "worst", "hate", "hated", "awful", "terrible", "horrible",
            "boring", "bored", "sad", "upset", "angry", "annoying", "annoyed", "poor",
            "disappointing", "disappointed", "stupid", "ugly", "painful", "dull", "mess",
            "waste", "weak", "wrong", "fail", "failed", "mad", "miserable",
        ];
        let mut entries = BTreeMap::new();
        for &w in POSITIVE {
            entries.insert(w.to_string(), Polarity::Positive);
        }
        for &w in NEGATIVE {
            entries.insert(w.to_string(), Polarity::Negative);
        }
        Lexicon { entries }
    }

    pub fn from_entries<I: IntoIterator<Item = (String, Polarity)>>(entries: I) -> Self {
        Lexicon {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.polarity_of(token).is_some()
    }

    pub fn polarity_of(&self, token: &str) -> Option<Polarity> {
        normalize(token).and_then(|key| self.entries.get(&key).copied())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Polarity)> {
        self.entries.iter().map(|(w, &p)| (w.as_str(), p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_strips_case_and_edge_punctuation() {
        assert_eq!(normalize("Upset!"), Some("upset".into()));
        assert_eq!(normalize("(happy)"), Some("happy".into()));
        assert_eq!(normalize("don't"), Some("don't".into()));
        assert_eq!(normalize("..."), None);
        assert_eq!(normalize(""), None);
    }

    #[test]
    fn wordpiece_continuations_never_normalize() {
        assert_eq!(normalize("##set"), None);
        // A leading strip would otherwise turn this into "set".
        assert!(!Lexicon::builtin().contains("##set"));
    }

    #[test]
    fn bare_words_default_positive() {
        let lex = Lexicon::parse("cheerful\ngrim negative\n", "test").unwrap();
        assert_eq!(lex.polarity_of("cheerful"), Some(Polarity::Positive));
        assert_eq!(lex.polarity_of("grim"), Some(Polarity::Negative));
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let lex = Lexicon::parse("; header\n\nfine pos\n  \nbleak neg\n", "test").unwrap();
        assert_eq!(lex.len(), 2);
    }

    #[test]
    fn unknown_polarity_is_rejected() {
        assert!(Lexicon::parse("fine neutral\n", "test").is_err());
    }

    #[test]
    fn lookup_normalizes_queries() {
        let lex = Lexicon::parse("upset negative\n", "test").unwrap();
        assert!(lex.contains("Upset"));
        assert!(lex.contains("upset,"));
        assert!(!lex.contains("set"));
    }

    #[test]
    fn later_entry_wins_within_a_file() {
        let lex = Lexicon::parse("odd pos\nodd neg\n", "test").unwrap();
        assert_eq!(lex.polarity_of("odd"), Some(Polarity::Negative));
    }

    #[test]
    fn merge_prefers_later_file() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let b = dir.path().join("b.txt");
        std::fs::write(&a, "odd pos\nonly_a neg\n").unwrap();
        std::fs::write(&b, "odd neg\n").unwrap();
        let lex = Lexicon::from_files(&[&a, &b]).unwrap();
        assert_eq!(lex.polarity_of("odd"), Some(Polarity::Negative));
        assert_eq!(lex.polarity_of("only_a"), Some(Polarity::Negative));
    }

    #[test]
    fn empty_merge_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        std::fs::write(&a, "; nothing here\n").unwrap();
        assert!(Lexicon::from_files(&[&a]).is_err());
    }
}
