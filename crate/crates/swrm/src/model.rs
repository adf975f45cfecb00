//! Full pipeline assembly: detection-time preparation of an utterance,
//! the parameter bundle for refinement plus fusion, the tape-level forward
//! pass, and checkpoint persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{AblationFlags, ModelDims};
use crate::corpus::align::pseudo_align;
use crate::corpus::Utterance;
use crate::detector::{detect, DetectionResult};
use crate::error::SwrmError;
use crate::fusion::{
    fuse, predict_all, FusionDims, FusionParams, PredictionNodes, SequencePooling,
};
use crate::lexicon::Lexicon;
use crate::lm::MaskedLm;
use crate::nn::{BoundParams, ParamExport, ParamStore};
use crate::refiner::{
    encode_contexts, refine_all_positions_mask_only, refine_sequence, ContextEncoders,
    EncoderDims, RefineInputs, RefinementTrace, RefinerParams,
};
use crate::tape::{NodeId, Tape};
use crate::util::derive_seed;

/// Everything parameter-independent about one utterance, computed once
/// before training: adapter embeddings, detection, and feature alignment.
#[derive(Clone, Debug)]
pub struct PreparedUtterance {
    pub id: String,
    pub label: f64,
    /// One embedding row per token.
    pub token_embeddings: Vec<Vec<f64>>,
    /// Features averaged down (or upsampled) to one row per token.
    pub aligned_visual: Vec<Vec<f64>>,
    pub aligned_acoustic: Vec<Vec<f64>>,
    /// The original frame-level features, as the fusion stage consumes them.
    pub raw_visual: Vec<Vec<f64>>,
    pub raw_acoustic: Vec<Vec<f64>>,
    pub mask_embedding: Vec<f64>,
    /// Absent when position detection is ablated away.
    pub detection: Option<DetectionResult>,
    /// Embeddings of the detected position's candidates; empty when
    /// attention is ablated or no candidates exist.
    pub candidate_embeddings: Vec<Vec<f64>>,
}

impl PreparedUtterance {
    pub fn gate_mask(&self) -> u8 {
        self.detection.as_ref().map_or(0, |d| d.gate_mask)
    }

    pub fn position(&self) -> usize {
        self.detection.as_ref().map_or(0, |d| d.position)
    }
}

/// Embed tokens, align features, and run detection for one utterance.
pub fn prepare_utterance(
    utterance: &Utterance,
    lm: &dyn MaskedLm,
    lexicon: &Lexicon,
    k: usize,
    ablate: &AblationFlags,
) -> Result<PreparedUtterance, SwrmError> {
    let n = utterance.tokens.len();
    let token_embeddings: Vec<Vec<f64>> = utterance
        .tokens
        .iter()
        .enumerate()
        .map(|(position, token)| {
            lm.embed_token(token)
                .map_err(|source| SwrmError::AdapterAt { position, source })
        })
        .collect::<Result<_, _>>()?;

    let detection = if ablate.no_position {
        None
    } else {
        Some(detect(&utterance.tokens, lm, lexicon, k)?)
    };

    let candidate_embeddings = match &detection {
        Some(result) if !ablate.no_attention => {
            let position = result.position;
            result
                .candidate_set
                .candidates
                .iter()
                .map(|c| {
                    lm.embed_token(&c.token)
                        .map_err(|source| SwrmError::AdapterAt { position, source })
                })
                .collect::<Result<_, _>>()?
        }
        _ => Vec::new(),
    };

    Ok(PreparedUtterance {
        id: utterance.id.clone(),
        label: utterance.label,
        token_embeddings,
        aligned_visual: pseudo_align(&utterance.visual, n),
        aligned_acoustic: pseudo_align(&utterance.acoustic, n),
        raw_visual: utterance.visual.clone(),
        raw_acoustic: utterance.acoustic.clone(),
        mask_embedding: lm.mask_embedding(),
        detection,
        candidate_embeddings,
    })
}

/// One forward pass's outputs, still differentiable on the tape.
pub struct ForwardPass {
    pub predictions: PredictionNodes,
    /// Modality summaries, inputs to the pseudo-label generator.
    pub text_view: NodeId,
    pub visual_view: NodeId,
    pub acoustic_view: NodeId,
    pub trace: Option<RefinementTrace>,
}

/// The complete parameter bundle: refinement-stage encoders and gates plus
/// the fusion stage.
pub struct SwrmModel {
    pub store: ParamStore,
    pub encoders: ContextEncoders,
    pub refiner: RefinerParams,
    pub fusion: FusionParams,
    pub dims: ModelDims,
    pub visual_feature_dim: usize,
    pub acoustic_feature_dim: usize,
}

impl SwrmModel {
    pub fn new(
        dims: &ModelDims,
        visual_feature_dim: usize,
        acoustic_feature_dim: usize,
    ) -> Result<Self, SwrmError> {
        if visual_feature_dim == 0 || acoustic_feature_dim == 0 {
            return Err(SwrmError::Config(
                "feature widths must be ≥ 1 to build the model".into(),
            ));
        }
        let mut store = ParamStore::new();
        let encoder_dims = EncoderDims {
            text_embedding_dim: dims.text_embedding_dim,
            text_state_dim: dims.text_state_dim,
            visual_feature_dim,
            acoustic_feature_dim,
            visual_state_dim: dims.visual_state_dim,
            acoustic_state_dim: dims.acoustic_state_dim,
            bimodal_state_dim: dims.bimodal_state_dim,
        };
        let encoders = ContextEncoders::register(&mut store, "refine.encoders", &encoder_dims)?;
        let refiner = RefinerParams::register(&mut store, "refine", &encoder_dims);
        let fusion_dims = FusionDims {
            text_embedding_dim: dims.text_embedding_dim,
            visual_feature_dim,
            acoustic_feature_dim,
            text_dim: dims.fusion_text_dim,
            visual_dim: dims.fusion_visual_dim,
            acoustic_dim: dims.fusion_acoustic_dim,
            fused_dim: dims.fusion_dim,
        };
        let fusion = FusionParams::register(&mut store, "fusion", &fusion_dims)?;
        Ok(SwrmModel {
            store,
            encoders,
            refiner,
            fusion,
            dims: *dims,
            visual_feature_dim,
            acoustic_feature_dim,
        })
    }

    /// Randomize all weights from the given seed (biases stay zero).
    pub fn init(&mut self, seed: u64) {
        use rand::SeedableRng;
        let mut rng =
            rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, "parameter-init"));
        self.store.init(&mut rng);
    }

    fn check_prepared(&self, prepared: &PreparedUtterance) -> Result<(), SwrmError> {
        let got = prepared
            .token_embeddings
            .first()
            .map(|row| row.len())
            .unwrap_or(0);
        if got != self.dims.text_embedding_dim {
            return Err(SwrmError::Config(format!(
                "adapter embeddings are {got}-dimensional, model expects {}",
                self.dims.text_embedding_dim
            )));
        }
        Ok(())
    }

    fn leaf_rows(tape: &mut Tape, rows: &[Vec<f64>]) -> Vec<NodeId> {
        rows.iter().map(|row| tape.leaf(row.clone())).collect()
    }

    /// Run detection-conditioned refinement and fuse the result.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        prepared: &PreparedUtterance,
        ablate: &AblationFlags,
        pooling: SequencePooling,
    ) -> Result<ForwardPass, SwrmError> {
        self.check_prepared(prepared)?;
        let x_l = Self::leaf_rows(tape, &prepared.token_embeddings);
        let (u_v, u_a) = if ablate.no_multimodal {
            // Text-only conditioning of the gates and attention: the
            // refinement stage sees zeroed features, the fusion stage below
            // keeps the real ones.
            let zeros_v = vec![vec![0.0; self.visual_feature_dim]; x_l.len()];
            let zeros_a = vec![vec![0.0; self.acoustic_feature_dim]; x_l.len()];
            (
                Self::leaf_rows(tape, &zeros_v),
                Self::leaf_rows(tape, &zeros_a),
            )
        } else {
            (
                Self::leaf_rows(tape, &prepared.aligned_visual),
                Self::leaf_rows(tape, &prepared.aligned_acoustic),
            )
        };
        let states = encode_contexts(tape, bound, &self.encoders, &x_l, &u_v, &u_a)?;
        let mask = tape.leaf(prepared.mask_embedding.clone());

        let (refined, trace) = match &prepared.detection {
            None => {
                let z_l = refine_all_positions_mask_only(
                    tape,
                    bound,
                    &self.refiner,
                    &states,
                    &x_l,
                    mask,
                );
                (z_l, None)
            }
            Some(detection) => {
                let candidates = Self::leaf_rows(tape, &prepared.candidate_embeddings);
                let inputs = RefineInputs {
                    token_embeddings: &x_l,
                    candidate_embeddings: &candidates,
                    mask_embedding: mask,
                    position: detection.position,
                    gate_mask: detection.gate_mask,
                    mask_only: ablate.no_attention || candidates.is_empty(),
                };
                let (z_l, trace) =
                    refine_sequence(tape, bound, &self.refiner, &states, &inputs);
                (z_l, Some(trace))
            }
        };

        let x_v = Self::leaf_rows(tape, &prepared.raw_visual);
        let x_a = Self::leaf_rows(tape, &prepared.raw_acoustic);
        let views = fuse(tape, bound, &self.fusion, &refined, &x_v, &x_a, pooling)?;
        let predictions = predict_all(tape, bound, &self.fusion, &views);
        Ok(ForwardPass {
            predictions,
            text_view: views.text,
            visual_view: views.visual,
            acoustic_view: views.acoustic,
            trace,
        })
    }

    /// Fusion over the raw token embeddings, skipping refinement entirely.
    /// The reference behavior for a closed gate mask.
    pub fn forward_without_refinement(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        prepared: &PreparedUtterance,
        pooling: SequencePooling,
    ) -> Result<ForwardPass, SwrmError> {
        self.check_prepared(prepared)?;
        let x_l = Self::leaf_rows(tape, &prepared.token_embeddings);
        let x_v = Self::leaf_rows(tape, &prepared.raw_visual);
        let x_a = Self::leaf_rows(tape, &prepared.raw_acoustic);
        let views = fuse(tape, bound, &self.fusion, &x_l, &x_v, &x_a, pooling)?;
        let predictions = predict_all(tape, bound, &self.fusion, &views);
        Ok(ForwardPass {
            predictions,
            text_view: views.text,
            visual_view: views.visual,
            acoustic_view: views.acoustic,
            trace: None,
        })
    }
}

pub const CHECKPOINT_FORMAT: &str = "swrm-checkpoint-v1";

/// Self-describing parameter archive: every tensor by name plus the config
/// fingerprint and seed that produced it.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub visual_feature_dim: usize,
    pub acoustic_feature_dim: usize,
    pub params: Vec<ParamExport>,
}

pub fn save_checkpoint(
    path: &Path,
    model: &SwrmModel,
    config_hash: &str,
    seed: u64,
) -> Result<(), SwrmError> {
    let checkpoint = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        config_hash: config_hash.to_string(),
        seed,
        visual_feature_dim: model.visual_feature_dim,
        acoustic_feature_dim: model.acoustic_feature_dim,
        params: model.store.export(),
    };
    let json = serde_json::to_string(&checkpoint).expect("checkpoint serializes");
    std::fs::write(path, json).map_err(|e| SwrmError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, SwrmError> {
    let text = std::fs::read_to_string(path).map_err(|e| SwrmError::io(path, e))?;
    let checkpoint: Checkpoint = serde_json::from_str(&text).map_err(|e| {
        SwrmError::Checkpoint(format!("cannot parse {}: {e}", path.display()))
    })?;
    if checkpoint.format != CHECKPOINT_FORMAT {
        return Err(SwrmError::Checkpoint(format!(
            "unsupported checkpoint format {:?}, expected {CHECKPOINT_FORMAT:?}",
            checkpoint.format
        )));
    }
    Ok(checkpoint)
}
