//! Shared generators for the integration suites: synthetic corpora and the
//! small model shapes the desk-scale checks run at.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use swrm::config::ModelDims;
use swrm::corpus::{DatasetSplit, SplitName, Utterance};

/// Words the built-in lexicon knows, mixed polarity.
pub const SENTIMENT_WORDS: &[&str] = &[
    "upset", "angry", "sad", "awful", "terrible", "boring", "happy", "good", "amazing",
    "wonderful", "love", "painful",
];

/// Words it does not.
pub const NEUTRAL_WORDS: &[&str] = &[
    "the", "and", "table", "window", "maybe", "thing", "going", "about", "there", "people",
    "quite", "fairly", "house", "later", "spoke",
];

/// A random utterance corpus. With `ensure_sentiment` every transcript
/// carries at least one lexicon word, so the corruption injector sees a
/// fully eligible corpus.
pub fn synthetic_split(
    n: usize,
    seed: u64,
    visual_dim: usize,
    acoustic_dim: usize,
    ensure_sentiment: bool,
) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let utterances = (0..n)
        .map(|i| {
            let len = rng.gen_range(3..8);
            let mut tokens: Vec<String> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        SENTIMENT_WORDS[rng.gen_range(0..SENTIMENT_WORDS.len())].to_string()
                    } else {
                        NEUTRAL_WORDS[rng.gen_range(0..NEUTRAL_WORDS.len())].to_string()
                    }
                })
                .collect();
            if ensure_sentiment {
                let slot = rng.gen_range(0..len);
                tokens[slot] = SENTIMENT_WORDS[rng.gen_range(0..SENTIMENT_WORDS.len())].to_string();
            }
            let frames = rng.gen_range(2..7);
            Utterance {
                id: format!("synth-{i}"),
                tokens,
                visual: (0..frames)
                    .map(|_| (0..visual_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect(),
                acoustic: (0..frames)
                    .map(|_| (0..acoustic_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect(),
                label: rng.gen_range(-3.0..3.0),
                gold_tokens: None,
            }
        })
        .collect();
    DatasetSplit {
        name: SplitName::Train,
        utterances,
    }
}

/// Layer sizes small enough for exhaustive finite-difference sweeps.
pub fn micro_dims(embedding_dim: usize) -> ModelDims {
    ModelDims {
        text_embedding_dim: embedding_dim,
        text_state_dim: 4,
        visual_state_dim: 2,
        acoustic_state_dim: 2,
        bimodal_state_dim: 2,
        fusion_text_dim: 4,
        fusion_visual_dim: 2,
        fusion_acoustic_dim: 2,
        fusion_dim: 4,
    }
}

/// All hidden sizes ≤ 16: the shape the overfitting check trains at.
pub fn overfit_dims(embedding_dim: usize) -> ModelDims {
    ModelDims {
        text_embedding_dim: embedding_dim,
        text_state_dim: 8,
        visual_state_dim: 4,
        acoustic_state_dim: 4,
        bimodal_state_dim: 4,
        fusion_text_dim: 8,
        fusion_visual_dim: 4,
        fusion_acoustic_dim: 4,
        fusion_dim: 16,
    }
}
