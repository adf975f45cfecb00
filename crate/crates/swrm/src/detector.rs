//! Sentiment-word position detection: mask each token, ask the LM for the
//! top-k fillers, and count how many are sentiment words. The position with
//! the highest count is the likely corrupted sentiment word; the gate mask
//! opens only when that count clears half of k.

use serde::Serialize;

use crate::error::SwrmError;
use crate::lexicon::{normalize, Lexicon};
use crate::lm::{CandidateSet, MaskedLm};

#[derive(Clone, Debug, Serialize)]
pub struct DetectionResult {
    /// Index of the most probable sentiment-word position.
    pub position: usize,
    /// 1 when the winning count strictly exceeds k/2, else 0.
    pub gate_mask: u8,
    /// Candidates at the winning position, with `sentiment_count` filled in.
    pub candidate_set: CandidateSet,
    /// Per-position sentiment-candidate counts, one per token.
    pub counts: Vec<usize>,
}

/// Count lexicon members among the candidates; `flags[t]` marks which
/// candidates hit.
pub fn candidate_filter(cands: &CandidateSet, lexicon: &Lexicon) -> (usize, Vec<bool>) {
    let flags: Vec<bool> = cands
        .candidates
        .iter()
        .map(|c| lexicon.contains(&c.token))
        .collect();
    let count = flags.iter().filter(|&&f| f).count();
    (count, flags)
}

/// Tokens that are never masked: bracketed specials like `[MASK]` or
/// `<pad>`, and tokens that are punctuation-only (nothing left after
/// normalization). Their counts are defined as zero.
fn skip_masking(token: &str) -> bool {
    let bracketed = (token.starts_with('[') && token.ends_with(']'))
        || (token.starts_with('<') && token.ends_with('>'));
    bracketed || normalize(token).is_none()
}

/// Scan every position and return the argmax-count position (ties to the
/// smallest index) with its gate mask.
pub fn detect(
    tokens: &[String],
    lm: &dyn MaskedLm,
    lexicon: &Lexicon,
    k: usize,
) -> Result<DetectionResult, SwrmError> {
    assert!(!tokens.is_empty(), "detect: empty token sequence");

    let mut counts = Vec::with_capacity(tokens.len());
    let mut best: Option<(usize, usize, CandidateSet)> = None;
    for (i, token) in tokens.iter().enumerate() {
        if skip_masking(token) {
            counts.push(0);
            continue;
        }
        let mut set = lm
            .top_k_candidates(tokens, i, k)
            .map_err(|source| SwrmError::AdapterAt { position: i, source })?;
        let (count, _) = candidate_filter(&set, lexicon);
        set.sentiment_count = count;
        counts.push(count);
        match &best {
            Some((_, best_count, _)) if count <= *best_count => {}
            _ => best = Some((i, count, set)),
        }
    }

    let (position, top_count, candidate_set) = match best {
        Some(found) => found,
        // Every token was skipped; fall back to an empty candidate set at
        // position 0, which the tie rule would pick anyway.
        None => (
            0,
            0,
            CandidateSet {
                position: 0,
                candidates: Vec::new(),
                sentiment_count: 0,
            },
        ),
    };
    let gate_mask = u8::from(2 * top_count > k);
    Ok(DetectionResult {
        position,
        gate_mask,
        candidate_set,
        counts,
    })
}
