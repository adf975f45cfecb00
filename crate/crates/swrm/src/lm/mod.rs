//! Masked-language-model adapters: the detector and refiner talk to a
//! pretrained bidirectional LM only through this interface, so tests can run
//! against a deterministic mock and offline runs against a precomputed
//! cache.

pub mod mock;
pub mod precomputed;

use serde::{Deserialize, Serialize};

use crate::error::AdapterError;
use crate::util::sha256_hex;

pub use mock::MockLm;
pub use precomputed::PrecomputedLm;

/// One candidate filler for a masked position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub token: String,
    pub probability: f64,
}

/// Top-k fillers for one masked position, most probable first.
/// `sentiment_count` is zero as returned by an adapter; the detector fills
/// it in after consulting the lexicon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub position: usize,
    pub candidates: Vec<Candidate>,
    pub sentiment_count: usize,
}

impl CandidateSet {
    /// Enforce the probability invariants: each in (0, 1], non-increasing.
    pub fn validate(&self) -> Result<(), AdapterError> {
        let mut prev = f64::INFINITY;
        for (i, c) in self.candidates.iter().enumerate() {
            if !(c.probability > 0.0 && c.probability <= 1.0) {
                return Err(AdapterError::Permanent(format!(
                    "candidate {i} ('{}') has probability {} outside (0, 1]",
                    c.token, c.probability
                )));
            }
            if c.probability > prev {
                return Err(AdapterError::Permanent(format!(
                    "candidate probabilities increase at index {i} ('{}')",
                    c.token
                )));
            }
            prev = c.probability;
        }
        if self.sentiment_count > self.candidates.len() {
            return Err(AdapterError::Permanent(
                "sentiment_count exceeds candidate count".into(),
            ));
        }
        Ok(())
    }
}

/// Abstract masked LM. All embeddings from one instance share
/// `embedding_dim()`; requests with `k > max_k()` fail fast with a
/// permanent error.
pub trait MaskedLm: Send + Sync {
    /// The `k` most probable fillers for `tokens` with `position` masked,
    /// sorted by descending probability.
    fn top_k_candidates(
        &self,
        tokens: &[String],
        position: usize,
        k: usize,
    ) -> Result<CandidateSet, AdapterError>;

    /// Input-layer embedding of a token; total for in-vocabulary tokens and
    /// resolved through the adapter's subword convention otherwise.
    fn embed_token(&self, token: &str) -> Result<Vec<f64>, AdapterError>;

    /// Embedding of the mask placeholder; constant per instance.
    fn mask_embedding(&self) -> Vec<f64>;

    fn embedding_dim(&self) -> usize;

    fn max_k(&self) -> usize;
}

/// Token used to mask a position before querying the LM.
pub const MASK_TOKEN: &str = "[MASK]";

/// Stable lookup key for "this sentence with position i masked": the first
/// 16 hex characters of the SHA-256 of the tokens joined by U+001F, with the
/// masked position replaced by [`MASK_TOKEN`], then `:position`. Both the
/// mock table and the precomputed cache are keyed this way.
pub fn context_key(tokens: &[String], position: usize) -> String {
    let mut joined = String::new();
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 {
            joined.push('\u{1f}');
        }
        if i == position {
            joined.push_str(MASK_TOKEN);
        } else {
            joined.push_str(tok);
        }
    }
    let digest = sha256_hex(&joined);
    format!("{}:{position}", &digest[..16])
}

fn check_k(k: usize, max_k: usize) -> Result<(), AdapterError> {
    if k == 0 {
        return Err(AdapterError::Permanent("k must be at least 1".into()));
    }
    if k > max_k {
        return Err(AdapterError::Permanent(format!(
            "k = {k} exceeds this adapter's max_k = {max_k}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn context_key_ignores_the_masked_token() {
        let a = context_key(&toks(&["i", "was", "upset"]), 2);
        let b = context_key(&toks(&["i", "was", "set"]), 2);
        assert_eq!(a, b);
    }

    #[test]
    fn context_key_depends_on_position_and_context() {
        let base = toks(&["i", "was", "upset"]);
        assert_ne!(context_key(&base, 1), context_key(&base, 2));
        assert_ne!(
            context_key(&toks(&["i", "am", "upset"]), 2),
            context_key(&base, 2)
        );
    }

    #[test]
    fn candidate_validation_rejects_increasing_probabilities() {
        let set = CandidateSet {
            position: 0,
            candidates: vec![
                Candidate {
                    token: "a".into(),
                    probability: 0.1,
                },
                Candidate {
                    token: "b".into(),
                    probability: 0.3,
                },
            ],
            sentiment_count: 0,
        };
        assert!(set.validate().is_err());
    }

    #[test]
    fn candidate_validation_rejects_out_of_range_probabilities() {
        for p in [0.0, -0.1, 1.5] {
            let set = CandidateSet {
                position: 0,
                candidates: vec![Candidate {
                    token: "a".into(),
                    probability: p,
                }],
                sentiment_count: 0,
            };
            assert!(set.validate().is_err(), "probability {p} accepted");
        }
    }

    #[test]
    fn equal_probabilities_are_allowed() {
        let set = CandidateSet {
            position: 0,
            candidates: vec![
                Candidate {
                    token: "a".into(),
                    probability: 0.2,
                },
                Candidate {
                    token: "b".into(),
                    probability: 0.2,
                },
            ],
            sentiment_count: 1,
        };
        assert!(set.validate().is_ok());
    }
}
