//! Neural building blocks on top of the tape: a flat parameter store,
//! linear layers, and unidirectional/bidirectional LSTMs.
//!
//! Parameters live in one contiguous `Vec<f64>` so the optimizer can treat
//! the whole model as a single flat vector. Each forward pass binds the
//! store onto a fresh tape (parameters become leaves) and gradient
//! gathering maps tape gradients back into the same flat layout.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SwrmError;
use crate::tape::{Gradients, NodeId, Tape};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ParamId(usize);

#[derive(Debug)]
struct ParamSpec {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
    kind: ParamKind,
}

/// Serialized form of one parameter tensor, used by checkpoints.
#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct ParamExport {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Default)]
pub struct ParamStore {
    specs: Vec<ParamSpec>,
    by_name: HashMap<String, usize>,
    data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, rows: usize, cols: usize, kind: ParamKind) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "parameter registered twice: {name}"
        );
        let offset = self.data.len();
        self.data.extend(std::iter::repeat_n(0.0, rows * cols));
        self.specs.push(ParamSpec {
            name: name.to_string(),
            rows,
            cols,
            offset,
            kind,
        });
        self.by_name.insert(name.to_string(), self.specs.len() - 1);
        ParamId(self.specs.len() - 1)
    }

    /// Fill weights with U[-1/√cols, 1/√cols] and biases with zero, in
    /// registration order so the same seed always yields the same values.
    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        for spec in &self.specs {
            let slot = &mut self.data[spec.offset..spec.offset + spec.rows * spec.cols];
            match spec.kind {
                ParamKind::Bias => slot.fill(0.0),
                ParamKind::Weight => {
                    let bound = 1.0 / (spec.cols as f64).sqrt();
                    for v in slot.iter_mut() {
                        *v = rng.gen_range(-bound..bound);
                    }
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn values(&self, id: ParamId) -> &[f64] {
        let spec = &self.specs[id.0];
        &self.data[spec.offset..spec.offset + spec.rows * spec.cols]
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [f64] {
        let spec = &self.specs[id.0];
        &mut self.data[spec.offset..spec.offset + spec.rows * spec.cols]
    }

    /// Push every parameter onto a tape as a leaf. Call once per tape; the
    /// returned binding maps [`ParamId`]s to that tape's nodes.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let ids = self
            .specs
            .iter()
            .map(|spec| {
                let value = self.data[spec.offset..spec.offset + spec.rows * spec.cols].to_vec();
                if spec.cols == 1 {
                    tape.leaf(value)
                } else {
                    tape.leaf_matrix(value, spec.rows, spec.cols)
                }
            })
            .collect();
        BoundParams { ids }
    }

    /// Collect gradients for every parameter into the store's flat layout.
    pub fn gather_grads(&self, bound: &BoundParams, grads: &Gradients) -> Vec<f64> {
        let mut flat = vec![0.0; self.data.len()];
        for (spec, &node) in self.specs.iter().zip(bound.ids.iter()) {
            let g = grads.wrt(node);
            flat[spec.offset..spec.offset + g.len()].copy_from_slice(g);
        }
        flat
    }

    pub fn export(&self) -> Vec<ParamExport> {
        self.specs
            .iter()
            .map(|spec| ParamExport {
                name: spec.name.clone(),
                rows: spec.rows,
                cols: spec.cols,
                data: self.data[spec.offset..spec.offset + spec.rows * spec.cols].to_vec(),
            })
            .collect()
    }

    /// Restore values from an export. Every registered parameter must be
    /// present with matching shape; extra entries are rejected.
    pub fn load(&mut self, exports: &[ParamExport]) -> Result<(), SwrmError> {
        let mut seen = 0usize;
        for export in exports {
            let idx = *self.by_name.get(&export.name).ok_or_else(|| {
                SwrmError::Checkpoint(format!("unknown parameter '{}'", export.name))
            })?;
            let spec = &self.specs[idx];
            if spec.rows != export.rows || spec.cols != export.cols {
                return Err(SwrmError::Checkpoint(format!(
                    "parameter '{}' has shape {}x{}, checkpoint holds {}x{}",
                    export.name, spec.rows, spec.cols, export.rows, export.cols
                )));
            }
            if export.data.len() != export.rows * export.cols {
                return Err(SwrmError::Checkpoint(format!(
                    "parameter '{}' data length {} does not match shape",
                    export.name,
                    export.data.len()
                )));
            }
            self.data[spec.offset..spec.offset + export.data.len()]
                .copy_from_slice(&export.data);
            seen += 1;
        }
        if seen != self.specs.len() {
            return Err(SwrmError::Checkpoint(format!(
                "checkpoint holds {seen} parameters, model expects {}",
                self.specs.len()
            )));
        }
        Ok(())
    }
}

pub struct BoundParams {
    ids: Vec<NodeId>,
}

impl BoundParams {
    pub fn node(&self, id: ParamId) -> NodeId {
        self.ids[id.0]
    }
}

// ----- linear ---------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct LinearParams {
    pub w: ParamId,
    pub b: ParamId,
    pub out_dim: usize,
    pub in_dim: usize,
}

impl LinearParams {
    pub fn register(store: &mut ParamStore, prefix: &str, in_dim: usize, out_dim: usize) -> Self {
        let w = store.register(&format!("{prefix}.weight"), out_dim, in_dim, ParamKind::Weight);
        let b = store.register(&format!("{prefix}.bias"), out_dim, 1, ParamKind::Bias);
        LinearParams {
            w,
            b,
            out_dim,
            in_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &BoundParams, x: NodeId) -> NodeId {
        tape.affine(bound.node(self.w), bound.node(self.b), x)
    }
}

// ----- LSTM -----------------------------------------------------------------

/// Gate blocks are packed input/forget/cell/output along the rows of the
/// stacked weight matrices.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmParams {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
    ) -> Self {
        let w = store.register(
            &format!("{prefix}.input_weights"),
            4 * hidden_dim,
            input_dim,
            ParamKind::Weight,
        );
        let u = store.register(
            &format!("{prefix}.recurrent_weights"),
            4 * hidden_dim,
            hidden_dim,
            ParamKind::Weight,
        );
        let b = store.register(&format!("{prefix}.bias"), 4 * hidden_dim, 1, ParamKind::Bias);
        LstmParams {
            w,
            u,
            b,
            input_dim,
            hidden_dim,
        }
    }

    /// Run over a sequence of input nodes, returning one hidden state per
    /// step. The sequence must be non-empty.
    pub fn forward(&self, tape: &mut Tape, bound: &BoundParams, inputs: &[NodeId]) -> Vec<NodeId> {
        assert!(!inputs.is_empty(), "lstm: empty input sequence");
        let h = self.hidden_dim;
        let mut h_prev = tape.leaf(vec![0.0; h]);
        let mut c_prev = tape.leaf(vec![0.0; h]);
        let mut outputs = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let from_input = tape.affine(bound.node(self.w), bound.node(self.b), x);
            let from_state = tape.matvec(bound.node(self.u), h_prev);
            let pre = tape.add(from_input, from_state);
            let i_pre = tape.slice(pre, 0, h);
            let f_pre = tape.slice(pre, h, h);
            let g_pre = tape.slice(pre, 2 * h, h);
            let o_pre = tape.slice(pre, 3 * h, h);
            let i = tape.sigmoid(i_pre);
            let f = tape.sigmoid(f_pre);
            let g = tape.tanh(g_pre);
            let o = tape.sigmoid(o_pre);
            let kept = tape.mul(f, c_prev);
            let written = tape.mul(i, g);
            let c = tape.add(kept, written);
            let c_act = tape.tanh(c);
            let h_new = tape.mul(o, c_act);
            h_prev = h_new;
            c_prev = c;
            outputs.push(h_new);
        }
        outputs
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BiLstmParams {
    pub forward_cell: LstmParams,
    pub backward_cell: LstmParams,
}

impl BiLstmParams {
    /// `hidden_dim` is the per-direction size; outputs have length
    /// `2 * hidden_dim`.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
    ) -> Self {
        BiLstmParams {
            forward_cell: LstmParams::register(
                store,
                &format!("{prefix}.forward"),
                input_dim,
                hidden_dim,
            ),
            backward_cell: LstmParams::register(
                store,
                &format!("{prefix}.backward"),
                input_dim,
                hidden_dim,
            ),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward_cell.hidden_dim
    }

    pub fn forward(&self, tape: &mut Tape, bound: &BoundParams, inputs: &[NodeId]) -> Vec<NodeId> {
        let fwd = self.forward_cell.forward(tape, bound, inputs);
        let reversed: Vec<NodeId> = inputs.iter().rev().copied().collect();
        let mut bwd = self.backward_cell.forward(tape, bound, &reversed);
        bwd.reverse();
        fwd.iter()
            .zip(bwd.iter())
            .map(|(&f, &b)| tape.concat(&[f, b]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn seeded_store(build: impl Fn(&mut ParamStore)) -> ParamStore {
        let mut store = ParamStore::new();
        build(&mut store);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        store.init(&mut rng);
        store
    }

    #[test]
    fn init_zeroes_biases_and_bounds_weights() {
        let store = seeded_store(|s| {
            LinearParams::register(s, "head", 16, 4);
        });
        let exports = store.export();
        let weight = exports.iter().find(|e| e.name == "head.weight").unwrap();
        let bias = exports.iter().find(|e| e.name == "head.bias").unwrap();
        let bound = 1.0 / 16f64.sqrt();
        assert!(weight.data.iter().all(|&v| v.abs() <= bound));
        assert!(weight.data.iter().any(|&v| v != 0.0));
        assert!(bias.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_init() {
        let a = seeded_store(|s| {
            LstmParams::register(s, "enc", 5, 3);
        });
        let b = seeded_store(|s| {
            LstmParams::register(s, "enc", 5, 3);
        });
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn export_load_round_trip() {
        let src = seeded_store(|s| {
            BiLstmParams::register(s, "enc", 4, 2);
            LinearParams::register(s, "head", 4, 1);
        });
        let mut dst = ParamStore::new();
        BiLstmParams::register(&mut dst, "enc", 4, 2);
        LinearParams::register(&mut dst, "head", 4, 1);
        dst.load(&src.export()).unwrap();
        assert_eq!(src.data(), dst.data());
    }

    #[test]
    fn load_rejects_shape_mismatch() {
        let src = seeded_store(|s| {
            LinearParams::register(s, "head", 4, 1);
        });
        let mut dst = ParamStore::new();
        LinearParams::register(&mut dst, "head", 5, 1);
        assert!(dst.load(&src.export()).is_err());
    }

    #[test]
    fn load_rejects_missing_parameters() {
        let src = seeded_store(|s| {
            LinearParams::register(s, "head", 4, 1);
        });
        let mut dst = ParamStore::new();
        LinearParams::register(&mut dst, "head", 4, 1);
        LinearParams::register(&mut dst, "extra", 3, 1);
        assert!(dst.load(&src.export()).is_err());
    }

    /// Full-parameter finite-difference check of a two-step LSTM followed by
    /// a linear head.
    #[test]
    fn lstm_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let lstm = LstmParams::register(&mut store, "enc", 3, 2);
        let head = LinearParams::register(&mut store, "head", 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        store.init(&mut rng);

        let xs = [vec![0.4, -0.2, 0.9], vec![-0.7, 0.3, 0.1], vec![0.2, 0.8, -0.5]];
        let run = |store: &ParamStore| -> f64 {
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape);
            let inputs: Vec<NodeId> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
            let states = lstm.forward(&mut tape, &bound, &inputs);
            let last = *states.last().unwrap();
            let out = head.forward(&mut tape, &bound, last);
            tape.value(out)[0]
        };

        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let inputs: Vec<NodeId> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let states = lstm.forward(&mut tape, &bound, &inputs);
        let last = *states.last().unwrap();
        let out = head.forward(&mut tape, &bound, last);
        let grads = tape.backward(out);
        let analytic = store.gather_grads(&bound, &grads);

        let h = 1e-5;
        let mut probe = seeded_clone(&store);
        #[allow(clippy::needless_range_loop)]
        for i in 0..store.len() {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let plus = run(&probe);
            probe.data_mut()[i] = orig - h;
            let minus = run(&probe);
            probe.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            assert!(
                ((analytic[i] - numeric) / denom).abs() < 1e-4,
                "param coord {i}: analytic {} vs numeric {numeric}",
                analytic[i]
            );
        }
    }

    fn seeded_clone(store: &ParamStore) -> ParamStore {
        let mut clone = ParamStore::new();
        for export in store.export() {
            let kind = if export.cols == 1 {
                ParamKind::Bias
            } else {
                ParamKind::Weight
            };
            clone.register(&export.name, export.rows, export.cols, kind);
        }
        clone.load(&store.export()).unwrap();
        clone
    }

    #[test]
    fn bilstm_outputs_concatenate_directions() {
        let mut store = ParamStore::new();
        let enc = BiLstmParams::register(&mut store, "enc", 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        store.init(&mut rng);

        let xs = [vec![0.1, 0.2, 0.3], vec![-0.4, 0.5, -0.6]];
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let inputs: Vec<NodeId> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let states = enc.forward(&mut tape, &bound, &inputs);
        assert_eq!(states.len(), 2);
        for &s in &states {
            assert_eq!(tape.value(s).len(), enc.output_dim());
        }

        // The forward half of position 0 must equal a unidirectional run.
        let fwd_only = enc.forward_cell.forward(&mut tape, &bound, &inputs);
        let full = tape.value(states[0]).to_vec();
        let uni = tape.value(fwd_only[0]).to_vec();
        assert_eq!(&full[..2], &uni[..]);
    }
}
