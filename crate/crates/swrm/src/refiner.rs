//! Sentiment-word refinement: encode the utterance contexts, gate how much
//! of the suspect token's embedding to keep, attend over the masked-LM
//! candidates, and blend the result back into the token sequence.
//!
//! All forward math runs on the [`crate::tape`] so the trainer can
//! backpropagate through every stage; the intermediate quantities are also
//! exported as a [`RefinementTrace`] for case-study inspection.

use serde::Serialize;

use crate::error::SwrmError;
use crate::nn::{BiLstmParams, BoundParams, LinearParams, LstmParams, ParamStore};
use crate::tape::{NodeId, Tape};

/// Hidden-state and input sizes for the four context encoders.
#[derive(Clone, Copy, Debug)]
pub struct EncoderDims {
    pub text_embedding_dim: usize,
    /// Total bidirectional text-state size; must be even.
    pub text_state_dim: usize,
    pub visual_feature_dim: usize,
    pub acoustic_feature_dim: usize,
    pub visual_state_dim: usize,
    pub acoustic_state_dim: usize,
    pub bimodal_state_dim: usize,
}

/// The contextual text encoder plus the three recurrent feature encoders.
#[derive(Clone, Copy, Debug)]
pub struct ContextEncoders {
    pub text: BiLstmParams,
    pub visual: LstmParams,
    pub acoustic: LstmParams,
    pub bimodal: LstmParams,
}

impl ContextEncoders {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        dims: &EncoderDims,
    ) -> Result<Self, SwrmError> {
        if !dims.text_state_dim.is_multiple_of(2) {
            return Err(SwrmError::Config(format!(
                "text_state_dim must be even for a bidirectional encoder, got {}",
                dims.text_state_dim
            )));
        }
        Ok(ContextEncoders {
            text: BiLstmParams::register(
                store,
                &format!("{prefix}.text"),
                dims.text_embedding_dim,
                dims.text_state_dim / 2,
            ),
            visual: LstmParams::register(
                store,
                &format!("{prefix}.visual"),
                dims.visual_feature_dim,
                dims.visual_state_dim,
            ),
            acoustic: LstmParams::register(
                store,
                &format!("{prefix}.acoustic"),
                dims.acoustic_feature_dim,
                dims.acoustic_state_dim,
            ),
            bimodal: LstmParams::register(
                store,
                &format!("{prefix}.bimodal"),
                dims.visual_feature_dim + dims.acoustic_feature_dim,
                dims.bimodal_state_dim,
            ),
        })
    }
}

/// Per-position encoder states; all vectors have the transcript's length.
pub struct EncoderStates {
    pub text: Vec<NodeId>,
    pub visual: Vec<NodeId>,
    pub acoustic: Vec<NodeId>,
    pub bimodal: Vec<NodeId>,
}

/// Run all four encoders over a pseudo-aligned utterance: `x_l` holds the
/// token embeddings, `u_v`/`u_a` the aligned visual and acoustic features,
/// one node per token position.
pub fn encode_contexts(
    tape: &mut Tape,
    bound: &BoundParams,
    encoders: &ContextEncoders,
    x_l: &[NodeId],
    u_v: &[NodeId],
    u_a: &[NodeId],
) -> Result<EncoderStates, SwrmError> {
    if x_l.len() != u_v.len() || x_l.len() != u_a.len() {
        return Err(SwrmError::Config(format!(
            "encoder inputs disagree on length: {} tokens, {} visual rows, {} acoustic rows",
            x_l.len(),
            u_v.len(),
            u_a.len()
        )));
    }
    if x_l.is_empty() {
        return Err(SwrmError::Config("cannot encode an empty utterance".into()));
    }
    let joint: Vec<NodeId> = u_v
        .iter()
        .zip(u_a.iter())
        .map(|(&v, &a)| tape.concat(&[v, a]))
        .collect();
    Ok(EncoderStates {
        text: encoders.text.forward(tape, bound, x_l),
        visual: encoders.visual.forward(tape, bound, u_v),
        acoustic: encoders.acoustic.forward(tape, bound, u_a),
        bimodal: encoders.bimodal.forward(tape, bound, &joint),
    })
}

/// The three scalar-gate networks of the refinement stage.
#[derive(Clone, Copy, Debug)]
pub struct RefinerParams {
    /// Multimodal gate over [text; visual; acoustic; bimodal] states.
    pub gate: LinearParams,
    /// Candidate scorer over [candidate embedding; visual; acoustic;
    /// bimodal] states.
    pub attention: LinearParams,
    /// Blend gate over [attended candidate embedding; mask embedding].
    pub aggregation: LinearParams,
}

impl RefinerParams {
    pub fn register(store: &mut ParamStore, prefix: &str, dims: &EncoderDims) -> Self {
        let state_sum = dims.visual_state_dim + dims.acoustic_state_dim + dims.bimodal_state_dim;
        RefinerParams {
            gate: LinearParams::register(
                store,
                &format!("{prefix}.gate"),
                dims.text_state_dim + state_sum,
                1,
            ),
            attention: LinearParams::register(
                store,
                &format!("{prefix}.attention"),
                dims.text_embedding_dim + state_sum,
                1,
            ),
            aggregation: LinearParams::register(
                store,
                &format!("{prefix}.aggregation"),
                2 * dims.text_embedding_dim,
                1,
            ),
        }
    }
}

/// How much to distrust the token at the suspect position: returns the
/// scalar gate g and the filtered embedding (1 − g·p)·x_s. With the gate
/// mask closed (p = 0) the filtered embedding IS `x_s`, bit for bit.
pub fn gate_filter(
    tape: &mut Tape,
    bound: &BoundParams,
    params: &RefinerParams,
    states: &EncoderStates,
    position: usize,
    x_s: NodeId,
    gate_mask: u8,
) -> (NodeId, NodeId) {
    let joint = tape.concat(&[
        states.text[position],
        states.visual[position],
        states.acoustic[position],
        states.bimodal[position],
    ]);
    let pre = params.gate.forward(tape, bound, joint);
    let g = tape.sigmoid(pre);
    tape.set_label(g, "multimodal-gate");
    let filtered = if gate_mask == 0 {
        x_s
    } else {
        let keep = tape.one_minus(g);
        tape.scale_scalar(keep, x_s)
    };
    (g, filtered)
}

/// Score each candidate embedding against the multimodal states at the
/// suspect position and pool the candidates by softmax weight.
pub fn candidate_attention(
    tape: &mut Tape,
    bound: &BoundParams,
    params: &RefinerParams,
    states: &EncoderStates,
    position: usize,
    candidate_embeddings: &[NodeId],
) -> (NodeId, NodeId) {
    assert!(
        !candidate_embeddings.is_empty(),
        "candidate_attention: no candidates"
    );
    let scores: Vec<NodeId> = candidate_embeddings
        .iter()
        .map(|&emb| {
            let joint = tape.concat(&[
                emb,
                states.visual[position],
                states.acoustic[position],
                states.bimodal[position],
            ]);
            params.attention.forward(tape, bound, joint)
        })
        .collect();
    let stacked = tape.concat(&scores);
    let weights = tape.softmax(stacked);
    tape.set_label(weights, "attention-weights");

    let mut pooled: Option<NodeId> = None;
    for (t, &emb) in candidate_embeddings.iter().enumerate() {
        let w_t = tape.slice(weights, t, 1);
        let term = tape.scale_scalar(w_t, emb);
        pooled = Some(match pooled {
            None => term,
            Some(acc) => tape.add(acc, term),
        });
    }
    (weights, pooled.expect("checked non-empty"))
}

pub struct Aggregated {
    pub mask_gate: NodeId,
    pub added: NodeId,
    pub refined: NodeId,
}

/// Blend the attended candidate embedding with the mask embedding, then
/// blend that with the filtered original. With p = 0 the refined embedding
/// IS the filtered one (which is `x_s` itself).
#[allow(clippy::too_many_arguments)]
pub fn aggregate(
    tape: &mut Tape,
    bound: &BoundParams,
    params: &RefinerParams,
    attended: NodeId,
    gate: NodeId,
    gate_mask: u8,
    filtered: NodeId,
    mask_embedding: NodeId,
) -> Aggregated {
    let joint = tape.concat(&[attended, mask_embedding]);
    let pre = params.aggregation.forward(tape, bound, joint);
    let mask_gate = tape.sigmoid(pre);
    tape.set_label(mask_gate, "mask-gate");
    let from_candidates = tape.scale_scalar(mask_gate, attended);
    let keep_mask = tape.one_minus(mask_gate);
    let from_mask = tape.scale_scalar(keep_mask, mask_embedding);
    let added = tape.add(from_candidates, from_mask);
    let refined = if gate_mask == 0 {
        filtered
    } else {
        let update = tape.scale_scalar(gate, added);
        tape.add(update, filtered)
    };
    Aggregated {
        mask_gate,
        added,
        refined,
    }
}

/// Everything the refinement of one utterance needs beyond parameters.
pub struct RefineInputs<'a> {
    /// Token embedding nodes, one per position.
    pub token_embeddings: &'a [NodeId],
    /// Candidate embedding nodes at the suspect position.
    pub candidate_embeddings: &'a [NodeId],
    pub mask_embedding: NodeId,
    pub position: usize,
    pub gate_mask: u8,
    /// Disable candidate attention: the mask embedding alone replaces the
    /// attended blend.
    pub mask_only: bool,
}

/// Intermediate quantities of one refinement, for case-study inspection.
#[derive(Clone, Debug, Serialize)]
pub struct RefinementTrace {
    pub position: usize,
    pub gate_mask: u8,
    /// The multimodal gate g ∈ (0, 1).
    pub gate: f64,
    /// Softmax weights over the candidates; empty in mask-only mode.
    pub attention_weights: Vec<f64>,
    /// Candidate/mask blend gate; absent in mask-only mode.
    pub mask_gate: Option<f64>,
    /// Attention-pooled candidate embedding; absent in mask-only mode.
    pub candidate_embedding: Option<Vec<f64>>,
    /// The blend of candidates and mask that would replace the token.
    pub added_embedding: Vec<f64>,
    /// The gated original embedding (1 − g·p)·x_s.
    pub filtered_embedding: Vec<f64>,
    /// The final embedding written back at the suspect position.
    pub refined_embedding: Vec<f64>,
}

/// Refine one position of the embedding sequence, returning the full new
/// sequence. When the gate mask is closed the output nodes are the input
/// nodes — refinement is a strict no-op.
pub fn refine_sequence(
    tape: &mut Tape,
    bound: &BoundParams,
    params: &RefinerParams,
    states: &EncoderStates,
    inputs: &RefineInputs,
) -> (Vec<NodeId>, RefinementTrace) {
    let s = inputs.position;
    assert!(s < inputs.token_embeddings.len(), "position out of range");
    let x_s = inputs.token_embeddings[s];

    let (gate, filtered) =
        gate_filter(tape, bound, params, states, s, x_s, inputs.gate_mask);

    let (weights, attended) = if inputs.mask_only {
        (None, None)
    } else {
        let (w, a) =
            candidate_attention(tape, bound, params, states, s, inputs.candidate_embeddings);
        (Some(w), Some(a))
    };

    let (mask_gate, added, refined) = match attended {
        Some(attended) => {
            let agg = aggregate(
                tape,
                bound,
                params,
                attended,
                gate,
                inputs.gate_mask,
                filtered,
                inputs.mask_embedding,
            );
            (Some(agg.mask_gate), agg.added, agg.refined)
        }
        None => {
            // Mask-only: the mask embedding itself is what the gate blends
            // in.
            let added = inputs.mask_embedding;
            let refined = if inputs.gate_mask == 0 {
                filtered
            } else {
                let update = tape.scale_scalar(gate, added);
                tape.add(update, filtered)
            };
            (None, added, refined)
        }
    };

    let mut sequence = inputs.token_embeddings.to_vec();
    sequence[s] = refined;

    let trace = RefinementTrace {
        position: s,
        gate_mask: inputs.gate_mask,
        gate: tape.value(gate)[0],
        attention_weights: weights.map_or_else(Vec::new, |w| tape.value(w).to_vec()),
        mask_gate: mask_gate.map(|g| tape.value(g)[0]),
        candidate_embedding: attended.map(|a| tape.value(a).to_vec()),
        added_embedding: tape.value(added).to_vec(),
        filtered_embedding: tape.value(filtered).to_vec(),
        refined_embedding: tape.value(refined).to_vec(),
    };
    (sequence, trace)
}

/// Position-detection ablation: no suspect position is known, so every
/// token is blended with the mask embedding through its own multimodal
/// gate (p = 1, mask-only, at each position).
pub fn refine_all_positions_mask_only(
    tape: &mut Tape,
    bound: &BoundParams,
    params: &RefinerParams,
    states: &EncoderStates,
    token_embeddings: &[NodeId],
    mask_embedding: NodeId,
) -> Vec<NodeId> {
    token_embeddings
        .iter()
        .enumerate()
        .map(|(i, &x_i)| {
            let (gate, filtered) = gate_filter(tape, bound, params, states, i, x_i, 1);
            let update = tape.scale_scalar(gate, mask_embedding);
            tape.add(update, filtered)
        })
        .collect()
}
