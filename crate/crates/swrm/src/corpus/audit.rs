//! Transcript error audits: word-level Levenshtein alignment with unit
//! costs, word error rate, and the sentiment-word substitution-error rate
//! measured over a corpus with reference transcripts.

use serde::Serialize;

use crate::corpus::DatasetSplit;
use crate::error::SwrmError;
use crate::lexicon::Lexicon;

/// One step of an optimal gold↔hypothesis alignment. Indices refer to the
/// gold side and the hypothesis side respectively.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EditOp {
    Match { gold: usize, hyp: usize },
    Substitute { gold: usize, hyp: usize },
    Delete { gold: usize },
    Insert { hyp: usize },
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize)]
pub struct EditCounts {
    pub matches: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    fn add(&mut self, op: &EditOp) {
        match op {
            EditOp::Match { .. } => self.matches += 1,
            EditOp::Substitute { .. } => self.substitutions += 1,
            EditOp::Delete { .. } => self.deletions += 1,
            EditOp::Insert { .. } => self.insertions += 1,
        }
    }
}

/// Optimal unit-cost alignment of two token sequences, in left-to-right
/// order. Cost ties are broken preferring substitution over a
/// delete-plus-insert pair.
pub fn align_tokens(gold: &[String], hyp: &[String]) -> Vec<EditOp> {
    let n = gold.len();
    let m = hyp.len();
    let mut cost = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in cost.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in cost[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[i - 1][j - 1] + usize::from(gold[i - 1] != hyp[j - 1]);
            let del = cost[i - 1][j] + 1;
            let ins = cost[i][j - 1] + 1;
            cost[i][j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let diag = cost[i - 1][j - 1] + usize::from(gold[i - 1] != hyp[j - 1]);
            if cost[i][j] == diag {
                ops.push(if gold[i - 1] == hyp[j - 1] {
                    EditOp::Match {
                        gold: i - 1,
                        hyp: j - 1,
                    }
                } else {
                    EditOp::Substitute {
                        gold: i - 1,
                        hyp: j - 1,
                    }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cost[i][j] == cost[i - 1][j] + 1 {
            ops.push(EditOp::Delete { gold: i - 1 });
            i -= 1;
        } else {
            ops.push(EditOp::Insert { hyp: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

pub fn edit_counts(gold: &[String], hyp: &[String]) -> EditCounts {
    let mut counts = EditCounts::default();
    for op in align_tokens(gold, hyp) {
        counts.add(&op);
    }
    counts
}

/// Word error rate (S+D+I)/len(gold).
pub fn wer(gold: &[String], hyp: &[String]) -> Result<f64, SwrmError> {
    if gold.is_empty() {
        return Err(SwrmError::Metric(
            "word error rate undefined for an empty reference".into(),
        ));
    }
    Ok(edit_counts(gold, hyp).errors() as f64 / gold.len() as f64)
}

/// Corpus-level WER: total errors over total reference length, across every
/// utterance that carries `gold_tokens`.
pub fn corpus_wer(split: &DatasetSplit) -> Result<f64, SwrmError> {
    let mut errors = 0usize;
    let mut ref_len = 0usize;
    for utt in &split.utterances {
        let gold = utt.gold_tokens.as_deref().ok_or_else(|| {
            SwrmError::Audit(format!("utterance '{}' has no gold_tokens", utt.id))
        })?;
        errors += edit_counts(gold, &utt.tokens).errors();
        ref_len += gold.len();
    }
    if ref_len == 0 {
        return Err(SwrmError::Audit("corpus has no reference tokens".into()));
    }
    Ok(errors as f64 / ref_len as f64)
}

/// Per-utterance flags: true where some lexicon word in the reference is
/// aligned to a different word that is either outside the lexicon or of the
/// opposite polarity — i.e. the transcript lost a sentiment cue.
pub fn sentiment_substitution_flags(
    split: &DatasetSplit,
    lexicon: &Lexicon,
) -> Result<Vec<bool>, SwrmError> {
    split
        .utterances
        .iter()
        .map(|utt| {
            let gold = utt.gold_tokens.as_deref().ok_or_else(|| {
                SwrmError::Audit(format!("utterance '{}' has no gold_tokens", utt.id))
            })?;
            Ok(align_tokens(gold, &utt.tokens).iter().any(|op| {
                let EditOp::Substitute { gold: gi, hyp: hi } = op else {
                    return false;
                };
                let Some(gold_polarity) = lexicon.polarity_of(&gold[*gi]) else {
                    return false;
                };
                lexicon.polarity_of(&utt.tokens[*hi]) != Some(gold_polarity)
            }))
        })
        .collect()
}

/// Fraction of utterances that lost a sentiment cue to a substitution.
pub fn substitution_error_rate(
    split: &DatasetSplit,
    lexicon: &Lexicon,
) -> Result<f64, SwrmError> {
    if split.is_empty() {
        return Err(SwrmError::Audit("cannot audit an empty dataset".into()));
    }
    let flags = sentiment_substitution_flags(split, lexicon)?;
    let affected = flags.iter().filter(|&&f| f).count();
    Ok(affected as f64 / split.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{minimal_utterance, SplitName, Utterance};
    use crate::lexicon::Polarity;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn single_substitution_in_three_words_is_one_third() {
        let rate = wer(&toks(&["a", "b", "c"]), &toks(&["a", "x", "c"])).unwrap();
        assert!((rate - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_sequences_have_zero_wer() {
        assert_eq!(wer(&toks(&["a", "b"]), &toks(&["a", "b"])).unwrap(), 0.0);
    }

    #[test]
    fn deleting_the_only_word_is_wer_one() {
        assert_eq!(wer(&toks(&["a"]), &[]).unwrap(), 1.0);
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert!(wer(&[], &toks(&["a"])).is_err());
    }

    #[test]
    fn ties_prefer_substitution_over_delete_insert() {
        let ops = align_tokens(&toks(&["a", "b"]), &toks(&["x", "y"]));
        assert_eq!(
            ops,
            vec![
                EditOp::Substitute { gold: 0, hyp: 0 },
                EditOp::Substitute { gold: 1, hyp: 1 }
            ]
        );
    }

    #[test]
    fn counts_cover_all_operation_kinds() {
        // gold: a b c d   hyp: a x c d e  → 1 sub + 1 ins, 3 matches.
        let counts = edit_counts(&toks(&["a", "b", "c", "d"]), &toks(&["a", "x", "c", "d", "e"]));
        assert_eq!(counts.matches, 3);
        assert_eq!(counts.substitutions, 1);
        assert_eq!(counts.insertions, 1);
        assert_eq!(counts.deletions, 0);
        assert_eq!(counts.errors(), 2);
    }

    fn lex() -> Lexicon {
        Lexicon::from_entries([
            ("upset".to_string(), Polarity::Negative),
            ("angry".to_string(), Polarity::Negative),
            ("happy".to_string(), Polarity::Positive),
        ])
    }

    fn with_gold(id: &str, gold: &[&str], tokens: &[&str]) -> Utterance {
        let mut utt = minimal_utterance(id, tokens);
        utt.gold_tokens = Some(gold.iter().map(|t| t.to_string()).collect());
        utt
    }

    fn split_of(utterances: Vec<Utterance>) -> DatasetSplit {
        DatasetSplit {
            name: SplitName::Test,
            utterances,
        }
    }

    #[test]
    fn lost_sentiment_words_are_counted_per_utterance() {
        let split = split_of(vec![
            // "upset" → "set": lexicon word became a non-lexicon word.
            with_gold("u1", &["i", "was", "upset"], &["i", "was", "set"]),
            // Clean pass-through.
            with_gold("u2", &["so", "happy"], &["so", "happy"]),
            // Same-polarity swap is not a lost cue.
            with_gold("u3", &["so", "angry"], &["so", "upset"]),
            // Opposite-polarity swap is.
            with_gold("u4", &["so", "happy"], &["so", "upset"]),
        ]);
        let rate = substitution_error_rate(&split, &lex()).unwrap();
        assert!((rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_lexicon_substitutions_are_ignored() {
        let split = split_of(vec![with_gold(
            "u1",
            &["the", "movie", "was", "upset"],
            &["a", "movie", "was", "upset"],
        )]);
        assert_eq!(substitution_error_rate(&split, &lex()).unwrap(), 0.0);
    }

    #[test]
    fn missing_gold_tokens_is_an_audit_error() {
        let split = split_of(vec![minimal_utterance("u1", &["hi"])]);
        assert!(matches!(
            substitution_error_rate(&split, &lex()).unwrap_err(),
            SwrmError::Audit(_)
        ));
        assert!(matches!(
            corpus_wer(&split).unwrap_err(),
            SwrmError::Audit(_)
        ));
    }

    #[test]
    fn corpus_wer_pools_errors_over_reference_length() {
        let split = split_of(vec![
            with_gold("u1", &["a", "b", "c"], &["a", "x", "c"]),
            with_gold("u2", &["d", "e"], &["d", "e"]),
        ]);
        // 1 error over 5 reference tokens.
        assert!((corpus_wer(&split).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn alignment_matches_brute_force_distance_on_short_sequences() {
        // Exhaustive over all sequences of length ≤ 4 from a 2-symbol
        // alphabet: the op-count distance must equal the DP cost matrix's
        // bottom-right cell, and ops must replay gold→hyp consistently.
        let alphabet = ["a", "b"];
        let mut sequences: Vec<Vec<String>> = vec![vec![]];
        for len in 1..=4 {
            let mut next = Vec::new();
            for seq in sequences.iter().filter(|s| s.len() == len - 1) {
                for sym in alphabet {
                    let mut s = seq.clone();
                    s.push(sym.to_string());
                    next.push(s);
                }
            }
            sequences.extend(next);
        }
        for gold in &sequences {
            for hyp in &sequences {
                let ops = align_tokens(gold, hyp);
                let mut counts = EditCounts::default();
                for op in &ops {
                    counts.add(op);
                }
                assert_eq!(
                    counts.matches + counts.substitutions + counts.deletions,
                    gold.len()
                );
                assert_eq!(
                    counts.matches + counts.substitutions + counts.insertions,
                    hyp.len()
                );
                assert_eq!(counts.errors(), brute_distance(gold, hyp));
            }
        }
    }

    fn brute_distance(gold: &[String], hyp: &[String]) -> usize {
        if gold.is_empty() {
            return hyp.len();
        }
        if hyp.is_empty() {
            return gold.len();
        }
        let sub = brute_distance(&gold[1..], &hyp[1..]) + usize::from(gold[0] != hyp[0]);
        let del = brute_distance(&gold[1..], hyp) + 1;
        let ins = brute_distance(gold, &hyp[1..]) + 1;
        sub.min(del).min(ins)
    }
}
