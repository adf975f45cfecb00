//! Masked-LM adapter backed by a precomputed on-disk cache.
//!
//! The cache is produced offline by running a real bidirectional LM over a
//! corpus once (see the repository README for the export recipe) and holds
//! everything the pipeline asks for at run time:
//!
//! - `meta.json` — `{"dim": int, "max_k": int}`
//! - `embeddings.jsonl` — `{"token": str, "values": [float]}` per line
//! - `candidates.jsonl` — `{"key": "context-hash:position",
//!   "candidates": [[token, prob], …]}` per line, keyed by
//!   [`super::context_key`]
//!
//! Reading problems are transient (retry once the filesystem settles);
//! entries genuinely absent from the cache are permanent failures.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::AdapterError;

use super::{check_k, context_key, Candidate, CandidateSet, MaskedLm};

/// Environment variable consulted when no cache directory is given
/// explicitly.
pub const CACHE_DIR_ENV: &str = "SWRM_ADAPTER_CACHE";

#[derive(Deserialize)]
struct Meta {
    dim: usize,
    max_k: usize,
}

#[derive(Deserialize)]
struct EmbeddingRow {
    token: String,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct CandidateRow {
    key: String,
    candidates: Vec<(String, f64)>,
}

#[derive(Debug)]
pub struct PrecomputedLm {
    dim: usize,
    max_k: usize,
    mask_embedding: Vec<f64>,
    embeddings: HashMap<String, Vec<f64>>,
    candidates: HashMap<String, Vec<Candidate>>,
}

impl PrecomputedLm {
    /// Open the cache at `dir`, or at `$SWRM_ADAPTER_CACHE` when `dir` is
    /// `None`.
    pub fn open(dir: Option<&Path>) -> Result<Self, AdapterError> {
        let dir: PathBuf = match dir {
            Some(d) => d.to_path_buf(),
            None => std::env::var_os(CACHE_DIR_ENV)
                .map(PathBuf::from)
                .ok_or_else(|| {
                    AdapterError::Permanent(format!(
                        "no cache directory given and {CACHE_DIR_ENV} is unset"
                    ))
                })?,
        };

        let meta: Meta = serde_json::from_str(&read(&dir.join("meta.json"))?)
            .map_err(|e| AdapterError::Permanent(format!("bad meta.json: {e}")))?;
        if meta.dim == 0 || meta.max_k == 0 {
            return Err(AdapterError::Permanent(
                "meta.json must declare dim ≥ 1 and max_k ≥ 1".into(),
            ));
        }

        let mut embeddings = HashMap::new();
        for (lineno, line) in non_empty_lines(&read(&dir.join("embeddings.jsonl"))?) {
            let row: EmbeddingRow = serde_json::from_str(line).map_err(|e| {
                AdapterError::Permanent(format!("embeddings.jsonl:{lineno}: {e}"))
            })?;
            if row.values.len() != meta.dim {
                return Err(AdapterError::Permanent(format!(
                    "embeddings.jsonl:{lineno}: '{}' has dim {}, cache declares {}",
                    row.token,
                    row.values.len(),
                    meta.dim
                )));
            }
            embeddings.insert(row.token, row.values);
        }

        let mut candidates = HashMap::new();
        for (lineno, line) in non_empty_lines(&read(&dir.join("candidates.jsonl"))?) {
            let row: CandidateRow = serde_json::from_str(line).map_err(|e| {
                AdapterError::Permanent(format!("candidates.jsonl:{lineno}: {e}"))
            })?;
            let set = CandidateSet {
                position: 0,
                candidates: row
                    .candidates
                    .into_iter()
                    .map(|(token, probability)| Candidate { token, probability })
                    .collect(),
                sentiment_count: 0,
            };
            set.validate().map_err(|e| {
                AdapterError::Permanent(format!("candidates.jsonl:{lineno}: {e}"))
            })?;
            candidates.insert(row.key, set.candidates);
        }

        let mask_embedding = embeddings
            .get(super::MASK_TOKEN)
            .cloned()
            .unwrap_or_else(|| vec![0.0; meta.dim]);

        Ok(PrecomputedLm {
            dim: meta.dim,
            max_k: meta.max_k,
            mask_embedding,
            embeddings,
            candidates,
        })
    }

    /// Greedy longest-match wordpiece decomposition over the cached
    /// vocabulary: the first piece is looked up bare, later pieces with a
    /// `##` continuation prefix.
    fn wordpieces(&self, token: &str) -> Option<Vec<&Vec<f64>>> {
        let chars: Vec<char> = token.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut matched = None;
            for end in (start + 1..=chars.len()).rev() {
                let body: String = chars[start..end].iter().collect();
                let piece = if start == 0 { body } else { format!("##{body}") };
                if let Some(values) = self.embeddings.get(&piece) {
                    matched = Some((values, end));
                    break;
                }
            }
            let (values, end) = matched?;
            pieces.push(values);
            start = end;
        }
        Some(pieces)
    }
}

fn read(path: &Path) -> Result<String, AdapterError> {
    fs::read_to_string(path)
        .map_err(|e| AdapterError::Transient(format!("cannot read {}: {e}", path.display())))
}

fn non_empty_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

impl MaskedLm for PrecomputedLm {
    fn top_k_candidates(
        &self,
        tokens: &[String],
        position: usize,
        k: usize,
    ) -> Result<CandidateSet, AdapterError> {
        check_k(k, self.max_k)?;
        if position >= tokens.len() {
            return Err(AdapterError::Permanent(format!(
                "position {position} out of range for {} tokens",
                tokens.len()
            )));
        }
        let key = context_key(tokens, position);
        let cached = self.candidates.get(&key).ok_or_else(|| {
            AdapterError::Permanent(format!(
                "no precomputed candidates for context {key}; regenerate the cache over this corpus"
            ))
        })?;
        if cached.len() < k {
            return Err(AdapterError::Permanent(format!(
                "cache holds {} candidates for context {key}, {k} requested",
                cached.len()
            )));
        }
        Ok(CandidateSet {
            position,
            candidates: cached.iter().take(k).cloned().collect(),
            sentiment_count: 0,
        })
    }

    fn embed_token(&self, token: &str) -> Result<Vec<f64>, AdapterError> {
        if let Some(values) = self.embeddings.get(token) {
            return Ok(values.clone());
        }
        let pieces = self.wordpieces(token).ok_or_else(|| {
            AdapterError::Permanent(format!(
                "'{token}' cannot be decomposed over the cached vocabulary"
            ))
        })?;
        let mut mean = vec![0.0; self.dim];
        for piece in &pieces {
            for (m, v) in mean.iter_mut().zip(piece.iter()) {
                *m += v;
            }
        }
        let n = pieces.len() as f64;
        for m in mean.iter_mut() {
            *m /= n;
        }
        Ok(mean)
    }

    fn mask_embedding(&self) -> Vec<f64> {
        self.mask_embedding.clone()
    }

    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn max_k(&self) -> usize {
        self.max_k
    }
}
