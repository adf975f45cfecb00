//! Multimodal fusion over the refined token sequence: summarize each
//! modality with its own encoder, join the summaries through a relu layer,
//! and score sentiment with one fused head plus one head per modality for
//! multi-task training.

use serde::{Deserialize, Serialize};

use crate::error::SwrmError;
use crate::nn::{BiLstmParams, BoundParams, LinearParams, LstmParams, ParamStore};
use crate::tape::{NodeId, Tape};

/// How a recurrent encoder's step outputs are reduced to one vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequencePooling {
    /// Use the first step's output.
    #[default]
    First,
    /// Use the last step's output.
    Last,
}

/// Input and summary sizes for the fusion stage.
#[derive(Clone, Copy, Debug)]
pub struct FusionDims {
    /// Width of the refined token embeddings fed to the text encoder.
    pub text_embedding_dim: usize,
    pub visual_feature_dim: usize,
    pub acoustic_feature_dim: usize,
    /// Text summary size; must be even (bidirectional encoder).
    pub text_dim: usize,
    pub visual_dim: usize,
    pub acoustic_dim: usize,
    /// Width of the joint fused representation.
    pub fused_dim: usize,
}

/// Fusion-stage encoders, the joint relu layer, and all four score heads.
#[derive(Clone, Copy, Debug)]
pub struct FusionParams {
    pub text_encoder: BiLstmParams,
    pub visual_encoder: LstmParams,
    pub acoustic_encoder: LstmParams,
    /// Joint layer mapping [text; visual; acoustic] summaries to the fused
    /// representation.
    pub joint: LinearParams,
    /// Fused sentiment score head.
    pub score: LinearParams,
    pub text_head: LinearParams,
    pub visual_head: LinearParams,
    pub acoustic_head: LinearParams,
}

impl FusionParams {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        dims: &FusionDims,
    ) -> Result<Self, SwrmError> {
        if !dims.text_dim.is_multiple_of(2) {
            return Err(SwrmError::Config(format!(
                "fusion text_dim must be even for a bidirectional encoder, got {}",
                dims.text_dim
            )));
        }
        Ok(FusionParams {
            text_encoder: BiLstmParams::register(
                store,
                &format!("{prefix}.text_encoder"),
                dims.text_embedding_dim,
                dims.text_dim / 2,
            ),
            visual_encoder: LstmParams::register(
                store,
                &format!("{prefix}.visual_encoder"),
                dims.visual_feature_dim,
                dims.visual_dim,
            ),
            acoustic_encoder: LstmParams::register(
                store,
                &format!("{prefix}.acoustic_encoder"),
                dims.acoustic_feature_dim,
                dims.acoustic_dim,
            ),
            joint: LinearParams::register(
                store,
                &format!("{prefix}.joint"),
                dims.text_dim + dims.visual_dim + dims.acoustic_dim,
                dims.fused_dim,
            ),
            score: LinearParams::register(store, &format!("{prefix}.score"), dims.fused_dim, 1),
            text_head: LinearParams::register(store, &format!("{prefix}.text_head"), dims.text_dim, 1),
            visual_head: LinearParams::register(
                store,
                &format!("{prefix}.visual_head"),
                dims.visual_dim,
                1,
            ),
            acoustic_head: LinearParams::register(
                store,
                &format!("{prefix}.acoustic_head"),
                dims.acoustic_dim,
                1,
            ),
        })
    }
}

/// Per-modality summaries plus the joint fused representation.
pub struct FusedViews {
    pub fused: NodeId,
    pub text: NodeId,
    pub visual: NodeId,
    pub acoustic: NodeId,
}

fn check_rows(
    what: &str,
    rows: &[NodeId],
    expected_dim: usize,
    tape: &Tape,
) -> Result<(), SwrmError> {
    let first = match rows.first() {
        Some(&node) => node,
        None => {
            return Err(SwrmError::Config(format!(
                "fusion: empty {what} sequence"
            )))
        }
    };
    let got = tape.value(first).len();
    if got != expected_dim {
        return Err(SwrmError::Config(format!(
            "fusion: {what} rows are {got}-dimensional, encoder expects {expected_dim}"
        )));
    }
    Ok(())
}

/// Summarize the refined token embeddings and the raw (unaligned) visual
/// and acoustic feature sequences, then join them: fused = relu(W·[text;
/// visual; acoustic] + b). The text summary is the encoder output at the
/// sequence start; the visual/acoustic summaries use the configured
/// pooling.
pub fn fuse(
    tape: &mut Tape,
    bound: &BoundParams,
    params: &FusionParams,
    refined_tokens: &[NodeId],
    visual_frames: &[NodeId],
    acoustic_frames: &[NodeId],
    pooling: SequencePooling,
) -> Result<FusedViews, SwrmError> {
    check_rows(
        "token",
        refined_tokens,
        params.text_encoder.forward_cell.input_dim,
        tape,
    )?;
    check_rows(
        "visual frame",
        visual_frames,
        params.visual_encoder.input_dim,
        tape,
    )?;
    check_rows(
        "acoustic frame",
        acoustic_frames,
        params.acoustic_encoder.input_dim,
        tape,
    )?;

    let pool = |steps: Vec<NodeId>| match pooling {
        SequencePooling::First => steps[0],
        SequencePooling::Last => *steps.last().expect("checked non-empty"),
    };

    let text_steps = params.text_encoder.forward(tape, bound, refined_tokens);
    let text = text_steps[0];
    let visual = pool(params.visual_encoder.forward(tape, bound, visual_frames));
    let acoustic = pool(params.acoustic_encoder.forward(tape, bound, acoustic_frames));

    let joint_in = tape.concat(&[text, visual, acoustic]);
    let pre = params.joint.forward(tape, bound, joint_in);
    let fused = tape.relu(pre);
    tape.set_label(fused, "fused-representation");
    Ok(FusedViews {
        fused,
        text,
        visual,
        acoustic,
    })
}

/// Sentiment scores (still on the tape), one fused and one per modality.
pub struct PredictionNodes {
    pub fused: NodeId,
    pub text: NodeId,
    pub visual: NodeId,
    pub acoustic: NodeId,
}

/// Plain-value counterpart of [`PredictionNodes`], for reports.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Prediction {
    pub fused: f64,
    pub text: f64,
    pub visual: f64,
    pub acoustic: f64,
}

/// Affine sentiment score of the fused representation.
pub fn predict(tape: &mut Tape, bound: &BoundParams, params: &FusionParams, fused: NodeId) -> NodeId {
    let p = params.score.forward(tape, bound, fused);
    tape.set_label(p, "fused-prediction");
    p
}

/// Score all four views: the fused head plus one unimodal head per
/// modality summary.
pub fn predict_all(
    tape: &mut Tape,
    bound: &BoundParams,
    params: &FusionParams,
    views: &FusedViews,
) -> PredictionNodes {
    let fused = predict(tape, bound, params, views.fused);
    let text = params.text_head.forward(tape, bound, views.text);
    let visual = params.visual_head.forward(tape, bound, views.visual);
    let acoustic = params.acoustic_head.forward(tape, bound, views.acoustic);
    PredictionNodes {
        fused,
        text,
        visual,
        acoustic,
    }
}

impl PredictionNodes {
    pub fn values(&self, tape: &Tape) -> Prediction {
        Prediction {
            fused: tape.value(self.fused)[0],
            text: tape.value(self.text)[0],
            visual: tape.value(self.visual)[0],
            acoustic: tape.value(self.acoustic)[0],
        }
    }
}

/// Produces per-modality regression targets for the auxiliary heads.
/// Implementations may inspect the modality summaries; the default ignores
/// them and copies the fused label.
pub trait PseudoLabelGenerator {
    fn generate(&self, label: f64, text: &[f64], visual: &[f64], acoustic: &[f64]) -> [f64; 3];
}

/// Default generator: every modality inherits the utterance label, so the
/// auxiliary heads act as plain regularizers.
pub struct CopyLabel;

impl PseudoLabelGenerator for CopyLabel {
    fn generate(&self, label: f64, _: &[f64], _: &[f64], _: &[f64]) -> [f64; 3] {
        [label; 3]
    }
}

/// Run a generator and clamp its outputs to the label scale [−3, 3],
/// warning when clamping fires.
pub fn generate_unimodal_labels(
    label: f64,
    text: &[f64],
    visual: &[f64],
    acoustic: &[f64],
    generator: &dyn PseudoLabelGenerator,
) -> [f64; 3] {
    let raw = generator.generate(label, text, visual, acoustic);
    let mut out = [0.0; 3];
    for (i, (&value, slot)) in raw.iter().zip(out.iter_mut()).enumerate() {
        if (-3.0..=3.0).contains(&value) {
            *slot = value;
        } else {
            let clamped = value.clamp(-3.0, 3.0);
            log::warn!(
                "pseudo label {value} for modality {i} outside [-3, 3], clamped to {clamped}"
            );
            *slot = clamped;
        }
    }
    out
}

/// Absolute-error training loss for one sample: |fused − label| plus the
/// weighted absolute errors of the unimodal heads. Weights must be ≥ 0; a
/// zero weight drops its term from the graph entirely.
pub fn multitask_loss(
    tape: &mut Tape,
    preds: &PredictionNodes,
    label: f64,
    unimodal_labels: [f64; 3],
    weights: [f64; 3],
) -> NodeId {
    debug_assert!(weights.iter().all(|&w| w >= 0.0), "negative loss weight");
    let abs_err = |tape: &mut Tape, pred: NodeId, target: f64| {
        let t = tape.scalar(target);
        let diff = tape.sub(pred, t);
        tape.abs(diff)
    };
    let mut loss = abs_err(tape, preds.fused, label);
    let heads = [preds.text, preds.visual, preds.acoustic];
    for ((&head, &target), &weight) in heads.iter().zip(unimodal_labels.iter()).zip(weights.iter())
    {
        if weight == 0.0 {
            continue;
        }
        let term = abs_err(tape, head, target);
        let weighted = tape.affine_const(weight, 0.0, term);
        loss = tape.add(loss, weighted);
    }
    tape.set_label(loss, "loss");
    loss
}
