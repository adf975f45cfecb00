//! Sentiment-word-aware multimodal refinement (SWRM) for sentiment analysis
//! over noisy ASR transcripts.
//!
//! ASR systems sometimes replace a sentiment-bearing word with an unrelated
//! one ("upset" recognized as "set"), which flips the sentiment carried by
//! the text while the voice and face still carry the original signal. This
//! crate implements a pipeline that:
//!
//! 1. detects the most likely position of a corrupted sentiment word by
//!    masking each token and counting sentiment words among the language
//!    model's top-k fillers ([`detector`]),
//! 2. refines the word embedding at that position with a multimodal gate,
//!    candidate-word attention, and a mask-embedding fallback ([`refiner`]),
//! 3. fuses text, acoustic, and visual representations into a sentiment
//!    score and trains the whole stack with auxiliary unimodal heads
//!    ([`model`], [`train`]),
//!
//! plus the corpus tooling the workflow needs: dataset loading and
//! pseudo-alignment, synthetic sentiment-word corruption with ground-truth
//! logs, substitution-error audits, WER ([`corpus`]), sentiment lexicons
//! ([`lexicon`]), and the evaluation metrics ([`eval`]).
//!
//! Everything is driven by a small reverse-mode autodiff tape ([`tape`]) so
//! gradients are exact and checkable against finite differences.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod detector;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod lexicon;
pub mod lm;
pub mod model;
pub mod nn;
pub mod refiner;
pub mod tape;
pub mod train;
pub mod util;

pub use error::{AdapterError, SwrmError};
