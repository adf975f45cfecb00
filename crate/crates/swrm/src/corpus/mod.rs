//! Tri-modal utterance datasets: loading and validation, frame-to-token
//! pseudo-alignment, synthetic sentiment-word corruption, and transcript
//! error audits.
//!
//! Datasets are JSON Lines, one utterance per line:
//! `{"id": str, "tokens": [str], "acoustic": [[float]], "visual": [[float]],
//! "label": float, "gold_tokens": [str] | null}`. Feature matrices are
//! row-major with one frame per row.

pub mod align;
pub mod audit;
pub mod corrupt;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::SwrmError;
use crate::util;

pub use align::pseudo_align;
pub use audit::{align_tokens, corpus_wer, substitution_error_rate, wer, EditCounts, EditOp};
pub use corrupt::{corrupt_sentiment_words, CorruptionPolicy, CorruptionRecord, CorruptionSpec};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub tokens: Vec<String>,
    pub acoustic: Vec<Vec<f64>>,
    pub visual: Vec<Vec<f64>>,
    pub label: f64,
    #[serde(default)]
    pub gold_tokens: Option<Vec<String>>,
}

impl Utterance {
    /// Check the single-record invariants, returning the first violation.
    fn check(&self) -> Result<(), String> {
        if self.tokens.is_empty() {
            return Err("tokens must be non-empty".into());
        }
        if !(-3.0..=3.0).contains(&self.label) || !self.label.is_finite() {
            return Err(format!("label {} outside [-3, 3]", self.label));
        }
        check_matrix("acoustic", &self.acoustic)?;
        check_matrix("visual", &self.visual)?;
        if let Some(gold) = &self.gold_tokens {
            if gold.is_empty() {
                return Err("gold_tokens present but empty".into());
            }
        }
        Ok(())
    }
}

fn check_matrix(name: &str, rows: &[Vec<f64>]) -> Result<(), String> {
    let Some(first) = rows.first() else {
        return Err(format!("{name} features must have at least one frame"));
    };
    if first.is_empty() {
        return Err(format!("{name} frames must have at least one dimension"));
    }
    let dim = first.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(format!(
                "{name} frame {i} has {} values, expected {dim}",
                row.len()
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(format!("{name} frame {i} contains a non-finite value"));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitName::Train => write!(f, "train"),
            SplitName::Valid => write!(f, "valid"),
            SplitName::Test => write!(f, "test"),
        }
    }
}

impl FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitName::Train),
            "valid" => Ok(SplitName::Valid),
            "test" => Ok(SplitName::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub utterances: Vec<Utterance>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn acoustic_dim(&self) -> usize {
        self.utterances
            .first()
            .map_or(0, |u| u.acoustic[0].len())
    }

    pub fn visual_dim(&self) -> usize {
        self.utterances.first().map_or(0, |u| u.visual[0].len())
    }
}

/// Load one split from a JSON Lines file, enforcing record and
/// cross-record invariants (uniform feature dimensions, unique ids).
pub fn load_dataset(path: &Path, name: SplitName) -> Result<DatasetSplit, SwrmError> {
    let utterances: Vec<Utterance> = util::read_jsonl(path, |line, text| {
        let utt: Utterance = serde_json::from_str(text).map_err(|e| SwrmError::Malformed {
            path: path.to_path_buf(),
            line,
            reason: e.to_string(),
        })?;
        utt.check().map_err(|reason| SwrmError::Schema {
            path: path.to_path_buf(),
            line,
            reason,
        })?;
        Ok(utt)
    })?;

    let mut seen = std::collections::HashSet::new();
    let mut acoustic_dim = None;
    let mut visual_dim = None;
    for utt in &utterances {
        if !seen.insert(utt.id.as_str()) {
            return Err(SwrmError::Schema {
                path: path.to_path_buf(),
                line: 0,
                reason: format!("duplicate utterance id '{}'", utt.id),
            });
        }
        let a = utt.acoustic[0].len();
        let v = utt.visual[0].len();
        match acoustic_dim {
            None => acoustic_dim = Some(a),
            Some(d) if d != a => {
                return Err(SwrmError::Schema {
                    path: path.to_path_buf(),
                    line: 0,
                    reason: format!(
                        "utterance '{}' has acoustic dim {a}, dataset uses {d}",
                        utt.id
                    ),
                })
            }
            _ => {}
        }
        match visual_dim {
            None => visual_dim = Some(v),
            Some(d) if d != v => {
                return Err(SwrmError::Schema {
                    path: path.to_path_buf(),
                    line: 0,
                    reason: format!(
                        "utterance '{}' has visual dim {v}, dataset uses {d}",
                        utt.id
                    ),
                })
            }
            _ => {}
        }
    }

    Ok(DatasetSplit { name, utterances })
}

pub fn save_dataset(path: &Path, split: &DatasetSplit) -> Result<(), SwrmError> {
    util::write_jsonl(path, &split.utterances)
}

#[cfg(test)]
pub(crate) fn minimal_utterance(id: &str, tokens: &[&str]) -> Utterance {
    Utterance {
        id: id.to_string(),
        tokens: tokens.iter().map(|t| t.to_string()).collect(),
        acoustic: vec![vec![0.1, 0.2]; 3],
        visual: vec![vec![0.3]; 2],
        label: 1.0,
        gold_tokens: None,
    }
}
