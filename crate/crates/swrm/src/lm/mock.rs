//! Deterministic mock masked LM driven by a JSON configuration file.
//!
//! Entries present in the config are returned verbatim; anything else is
//! synthesized pseudo-randomly from the instance seed, so the mock is total
//! over all inputs yet bit-identical across processes and platforms.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::AdapterError;
use crate::util::derive_seed;

use super::{check_k, context_key, Candidate, CandidateSet, MaskedLm};

fn default_max_k() -> usize {
    50
}

#[derive(Deserialize, Debug)]
struct MockConfig {
    dim: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_max_k")]
    max_k: usize,
    /// Defaults to the zero vector of length `dim`.
    #[serde(default)]
    mask_embedding: Option<Vec<f64>>,
    /// token → embedding, returned verbatim.
    #[serde(default)]
    embeddings: HashMap<String, Vec<f64>>,
    /// "context-hash:position" (see [`context_key`]) → [[token, prob], …].
    #[serde(default)]
    candidates: HashMap<String, Vec<(String, f64)>>,
    /// Vocabulary used to synthesize candidate lists for unconfigured
    /// contexts.
    #[serde(default)]
    fallback_vocab: Option<Vec<String>>,
}

pub struct MockLm {
    dim: usize,
    seed: u64,
    max_k: usize,
    mask_embedding: Vec<f64>,
    embeddings: HashMap<String, Vec<f64>>,
    candidates: HashMap<String, Vec<Candidate>>,
    fallback_vocab: Vec<String>,
}

const DEFAULT_FALLBACK_VOCAB: &[&str] = &[
    "the", "and", "was", "with", "that", "this", "have", "from", "they", "about", "would",
    "there", "thing", "going", "really", "very", "just", "some", "time", "people",
];

impl MockLm {
    pub fn from_file(path: &Path) -> Result<Self, AdapterError> {
        let text = fs::read_to_string(path).map_err(|e| {
            AdapterError::Transient(format!("cannot read mock config {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, AdapterError> {
        let config: MockConfig = serde_json::from_str(text)
            .map_err(|e| AdapterError::Permanent(format!("bad mock config: {e}")))?;
        Self::from_config(config)
    }

    fn from_config(config: MockConfig) -> Result<Self, AdapterError> {
        if config.dim == 0 {
            return Err(AdapterError::Permanent("embedding dim must be ≥ 1".into()));
        }
        let mask_embedding = match config.mask_embedding {
            Some(v) => {
                if v.len() != config.dim {
                    return Err(AdapterError::Permanent(format!(
                        "mask_embedding has length {}, expected {}",
                        v.len(),
                        config.dim
                    )));
                }
                v
            }
            None => vec![0.0; config.dim],
        };
        for (token, emb) in &config.embeddings {
            if emb.len() != config.dim {
                return Err(AdapterError::Permanent(format!(
                    "embedding for '{token}' has length {}, expected {}",
                    emb.len(),
                    config.dim
                )));
            }
        }
        let mut candidates = HashMap::new();
        for (key, list) in config.candidates {
            let set = CandidateSet {
                position: 0,
                candidates: list
                    .into_iter()
                    .map(|(token, probability)| Candidate { token, probability })
                    .collect(),
                sentiment_count: 0,
            };
            set.validate()
                .map_err(|e| AdapterError::Permanent(format!("candidates for '{key}': {e}")))?;
            candidates.insert(key, set.candidates);
        }
        let fallback_vocab = config.fallback_vocab.unwrap_or_else(|| {
            DEFAULT_FALLBACK_VOCAB
                .iter()
                .map(|s| s.to_string())
                .collect()
        });
        if fallback_vocab.is_empty() {
            return Err(AdapterError::Permanent("fallback_vocab is empty".into()));
        }
        Ok(MockLm {
            dim: config.dim,
            seed: config.seed,
            max_k: config.max_k,
            mask_embedding,
            embeddings: config.embeddings,
            candidates,
            fallback_vocab,
        })
    }

    /// A mock with no configured tables: everything is synthesized from the
    /// seed. Handy for tests and synthetic training corpora.
    pub fn synthetic(dim: usize, seed: u64) -> Self {
        MockLm {
            dim,
            seed,
            max_k: default_max_k(),
            mask_embedding: vec![0.0; dim],
            embeddings: HashMap::new(),
            candidates: HashMap::new(),
            fallback_vocab: DEFAULT_FALLBACK_VOCAB
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    fn synthesize_embedding(&self, token: &str) -> Vec<f64> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &format!("embedding:{token}")));
        (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn synthesize_candidates(&self, key: &str, k: usize) -> Vec<Candidate> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &format!("candidates:{key}")));
        let mut pool: Vec<&String> = self.fallback_vocab.iter().collect();
        let take = k.min(pool.len());
        let mut out = Vec::with_capacity(take);
        for t in 0..take {
            let idx = rng.gen_range(0..pool.len());
            let token = pool.swap_remove(idx);
            out.push(Candidate {
                token: token.clone(),
                probability: 0.5 * 0.9f64.powi(t as i32),
            });
        }
        out
    }
}

impl MaskedLm for MockLm {
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
        let candidates = match self.candidates.get(&key) {
            Some(list) => list.iter().take(k).cloned().collect(),
            None => self.synthesize_candidates(&key, k),
        };
        Ok(CandidateSet {
            position,
            candidates,
            sentiment_count: 0,
        })
    }

    fn embed_token(&self, token: &str) -> Result<Vec<f64>, AdapterError> {
        Ok(self
            .embeddings
            .get(token)
            .cloned()
            .unwrap_or_else(|| self.synthesize_embedding(token)))
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

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn config_with_table() -> String {
        let tokens = toks(&["i", "was", "really", "upset"]);
        let key = context_key(&tokens, 3);
        format!(
            r#"{{
                "dim": 4,
                "seed": 99,
                "embeddings": {{"good": [1.0, 0.0, 0.0, 0.0]}},
                "candidates": {{"{key}": [["upset", 0.3], ["set", 0.1], ["angry", 0.05]]}}
            }}"#
        )
    }

    #[test]
    fn configured_candidates_are_returned_verbatim() {
        let lm = MockLm::from_json(&config_with_table()).unwrap();
        let set = lm
            .top_k_candidates(&toks(&["i", "was", "really", "upset"]), 3, 10)
            .unwrap();
        assert_eq!(set.candidates.len(), 3);
        assert_eq!(set.candidates[0].token, "upset");
        assert_eq!(set.candidates[0].probability, 0.3);
        // The same context reached from a different surface form at the
        // masked position hits the same table entry.
        let set2 = lm
            .top_k_candidates(&toks(&["i", "was", "really", "set"]), 3, 10)
            .unwrap();
        assert_eq!(set, set2);
    }

    #[test]
    fn configured_candidates_truncate_to_k() {
        let lm = MockLm::from_json(&config_with_table()).unwrap();
        let set = lm
            .top_k_candidates(&toks(&["i", "was", "really", "upset"]), 3, 2)
            .unwrap();
        assert_eq!(set.candidates.len(), 2);
        assert_eq!(set.candidates[1].token, "set");
    }

    #[test]
    fn configured_embedding_is_returned_verbatim() {
        let lm = MockLm::from_json(&config_with_table()).unwrap();
        assert_eq!(lm.embed_token("good").unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn mask_embedding_defaults_to_zeros() {
        let lm = MockLm::from_json(&config_with_table()).unwrap();
        assert_eq!(lm.mask_embedding(), vec![0.0; 4]);
    }

    #[test]
    fn synthesized_values_are_bit_deterministic_across_instances() {
        let a = MockLm::synthetic(8, 1234);
        let b = MockLm::synthetic(8, 1234);
        assert_eq!(
            a.embed_token("anything").unwrap(),
            b.embed_token("anything").unwrap()
        );
        let tokens = toks(&["totally", "novel", "context"]);
        assert_eq!(
            a.top_k_candidates(&tokens, 1, 5).unwrap(),
            b.top_k_candidates(&tokens, 1, 5).unwrap()
        );
        let c = MockLm::synthetic(8, 1235);
        assert_ne!(
            a.embed_token("anything").unwrap(),
            c.embed_token("anything").unwrap()
        );
    }

    #[test]
    fn synthesized_candidates_satisfy_probability_invariants() {
        let lm = MockLm::synthetic(4, 7);
        let set = lm.top_k_candidates(&toks(&["a", "b", "c"]), 0, 10).unwrap();
        assert!(set.validate().is_ok());
        assert!(set.candidates.len() <= 10);
        let tokens: std::collections::HashSet<&str> =
            set.candidates.iter().map(|c| c.token.as_str()).collect();
        assert_eq!(tokens.len(), set.candidates.len(), "duplicate candidates");
    }

    #[test]
    fn k_beyond_max_k_fails_permanently() {
        let lm = MockLm::synthetic(4, 7);
        let err = lm
            .top_k_candidates(&toks(&["a"]), 0, 51)
            .unwrap_err();
        assert!(!err.is_transient());
    }

    #[test]
    fn out_of_range_position_fails() {
        let lm = MockLm::synthetic(4, 7);
        assert!(lm.top_k_candidates(&toks(&["a"]), 1, 5).is_err());
    }

    #[test]
    fn non_monotone_config_is_rejected() {
        let bad = r#"{"dim": 2, "candidates": {"xx:0": [["a", 0.1], ["b", 0.2]]}}"#;
        assert!(MockLm::from_json(bad).is_err());
    }

    #[test]
    fn wrong_length_embedding_is_rejected() {
        let bad = r#"{"dim": 3, "embeddings": {"a": [1.0]}}"#;
        assert!(MockLm::from_json(bad).is_err());
    }
}
