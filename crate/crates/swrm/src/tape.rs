//! Reverse-mode automatic differentiation over a flat tape of f64 tensors.
//!
//! Nodes hold column vectors or row-major matrices. Values are computed
//! eagerly when an op is recorded; [`Tape::backward`] replays the tape in
//! reverse and accumulates a gradient for every node. The op set is just
//! what the pipeline needs (affine maps, LSTM gate algebra, softmax,
//! absolute-error losses), each one verified against central finite
//! differences in the tests below.

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// W·x + b with W a (rows × cols) matrix node.
    Affine { w: NodeId, b: NodeId, x: NodeId },
    /// W·x.
    MatVec { w: NodeId, x: NodeId },
    /// Mᵀ·x with M (rows × cols) and x of length rows.
    MatTVec { m: NodeId, x: NodeId },
    Concat { parts: Vec<NodeId> },
    Slice { x: NodeId, start: usize },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    /// s·x with s a length-1 node.
    ScaleScalar { s: NodeId, x: NodeId },
    /// a·x + b elementwise with constants a, b; only the slope matters to
    /// the backward pass.
    AffineConst { a: f64, x: NodeId },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    Relu { x: NodeId },
    Softmax { x: NodeId },
    Dot { a: NodeId, b: NodeId },
    Abs { x: NodeId },
    /// Mean of length-1 nodes.
    MeanOf { parts: Vec<NodeId> },
    SumElems { x: NodeId },
}

struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
    label: Option<&'static str>,
}

/// Gradients for every node of a tape, indexed by [`NodeId`].
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    /// Attach a role label used by divergence diagnostics.
    pub fn set_label(&mut self, id: NodeId, label: &'static str) {
        self.nodes[id.0].label = Some(label);
    }

    /// First node (in recording order) holding a non-finite value, with its
    /// label if one was attached.
    pub fn first_non_finite(&self) -> Option<(NodeId, Option<&'static str>)> {
        self.nodes.iter().enumerate().find_map(|(i, n)| {
            if n.value.iter().any(|v| !v.is_finite()) {
                Some((NodeId(i), n.label))
            } else {
                None
            }
        })
    }

    fn push(&mut self, op: Op, value: Vec<f64>, rows: usize, cols: usize) -> NodeId {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
            label: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn len_of(&self, id: NodeId) -> usize {
        self.nodes[id.0].value.len()
    }

    fn assert_vector(&self, id: NodeId, ctx: &str) {
        assert_eq!(self.nodes[id.0].cols, 1, "{ctx}: expected a column vector");
    }

    // ----- leaves ---------------------------------------------------------

    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        let rows = value.len();
        self.push(Op::Leaf, value, rows, 1)
    }

    pub fn leaf_matrix(&mut self, value: Vec<f64>, rows: usize, cols: usize) -> NodeId {
        assert_eq!(value.len(), rows * cols, "leaf_matrix: shape mismatch");
        self.push(Op::Leaf, value, rows, cols)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.leaf(vec![value])
    }

    // ----- linear algebra -------------------------------------------------

    pub fn affine(&mut self, w: NodeId, b: NodeId, x: NodeId) -> NodeId {
        let (m, n) = self.shape(w);
        self.assert_vector(x, "affine");
        self.assert_vector(b, "affine");
        assert_eq!(self.len_of(x), n, "affine: W cols vs x len");
        assert_eq!(self.len_of(b), m, "affine: W rows vs b len");
        let mut out = self.nodes[b.0].value.clone();
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        for i in 0..m {
            let mut acc = 0.0;
            let row = &wv[i * n..(i + 1) * n];
            for j in 0..n {
                acc += row[j] * xv[j];
            }
            out[i] += acc;
        }
        self.push(Op::Affine { w, b, x }, out, m, 1)
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> NodeId {
        let (m, n) = self.shape(w);
        self.assert_vector(x, "matvec");
        assert_eq!(self.len_of(x), n, "matvec: W cols vs x len");
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &wv[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * xv[j];
            }
            out[i] = acc;
        }
        self.push(Op::MatVec { w, x }, out, m, 1)
    }

    pub fn mat_t_vec(&mut self, m: NodeId, x: NodeId) -> NodeId {
        let (r, c) = self.shape(m);
        self.assert_vector(x, "mat_t_vec");
        assert_eq!(self.len_of(x), r, "mat_t_vec: M rows vs x len");
        let mv = &self.nodes[m.0].value;
        let xv = &self.nodes[x.0].value;
        let mut out = vec![0.0; c];
        for t in 0..r {
            let row = &mv[t * c..(t + 1) * c];
            let xt = xv[t];
            for j in 0..c {
                out[j] += xt * row[j];
            }
        }
        self.push(Op::MatTVec { m, x }, out, c, 1)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat: no parts");
        let mut value = Vec::new();
        for &p in parts {
            self.assert_vector(p, "concat");
            value.extend_from_slice(&self.nodes[p.0].value);
        }
        let rows = value.len();
        self.push(
            Op::Concat {
                parts: parts.to_vec(),
            },
            value,
            rows,
            1,
        )
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        self.assert_vector(x, "slice");
        assert!(start + len <= self.len_of(x), "slice: out of range");
        let value = self.nodes[x.0].value[start..start + len].to_vec();
        self.push(Op::Slice { x, start }, value, len, 1)
    }

    // ----- elementwise ----------------------------------------------------

    fn zip_elementwise(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        assert_eq!(self.shape(a), self.shape(b), "elementwise: shape mismatch");
        self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(&x, &y)| f(x, y))
            .collect()
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.zip_elementwise(a, b, |x, y| x + y);
        let (r, c) = self.shape(a);
        self.push(Op::Add { a, b }, value, r, c)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.zip_elementwise(a, b, |x, y| x - y);
        let (r, c) = self.shape(a);
        self.push(Op::Sub { a, b }, value, r, c)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.zip_elementwise(a, b, |x, y| x * y);
        let (r, c) = self.shape(a);
        self.push(Op::Mul { a, b }, value, r, c)
    }

    pub fn scale_scalar(&mut self, s: NodeId, x: NodeId) -> NodeId {
        assert_eq!(self.len_of(s), 1, "scale_scalar: scalar must be length 1");
        let sv = self.nodes[s.0].value[0];
        let value: Vec<f64> = self.nodes[x.0].value.iter().map(|&v| sv * v).collect();
        let (r, c) = self.shape(x);
        self.push(Op::ScaleScalar { s, x }, value, r, c)
    }

    pub fn affine_const(&mut self, a: f64, b: f64, x: NodeId) -> NodeId {
        let value: Vec<f64> = self.nodes[x.0].value.iter().map(|&v| a * v + b).collect();
        let (r, c) = self.shape(x);
        self.push(Op::AffineConst { a, x }, value, r, c)
    }

    /// 1 − x elementwise.
    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        self.affine_const(-1.0, 1.0, x)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value: Vec<f64> = self.nodes[x.0]
            .value
            .iter()
            .map(|&v| stable_sigmoid(v))
            .collect();
        let (r, c) = self.shape(x);
        self.push(Op::Sigmoid { x }, value, r, c)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value: Vec<f64> = self.nodes[x.0].value.iter().map(|&v| v.tanh()).collect();
        let (r, c) = self.shape(x);
        self.push(Op::Tanh { x }, value, r, c)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value: Vec<f64> = self.nodes[x.0].value.iter().map(|&v| v.max(0.0)).collect();
        let (r, c) = self.shape(x);
        self.push(Op::Relu { x }, value, r, c)
    }

    /// Softmax with max subtraction.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        self.assert_vector(x, "softmax");
        let xv = &self.nodes[x.0].value;
        let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let value: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
        let rows = value.len();
        self.push(Op::Softmax { x }, value, rows, 1)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.len_of(a), self.len_of(b), "dot: length mismatch");
        let v: f64 = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(&x, &y)| x * y)
            .sum();
        self.push(Op::Dot { a, b }, vec![v], 1, 1)
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let value: Vec<f64> = self.nodes[x.0].value.iter().map(|&v| v.abs()).collect();
        let (r, c) = self.shape(x);
        self.push(Op::Abs { x }, value, r, c)
    }

    pub fn mean_of(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "mean_of: no parts");
        for &p in parts {
            assert_eq!(self.len_of(p), 1, "mean_of: parts must be scalars");
        }
        let sum: f64 = parts.iter().map(|&p| self.nodes[p.0].value[0]).sum();
        let v = sum / parts.len() as f64;
        self.push(
            Op::MeanOf {
                parts: parts.to_vec(),
            },
            vec![v],
            1,
            1,
        )
    }

    pub fn sum_elems(&mut self, x: NodeId) -> NodeId {
        let v: f64 = self.nodes[x.0].value.iter().sum();
        self.push(Op::SumElems { x }, vec![v], 1, 1)
    }

    // ----- backward -------------------------------------------------------

    /// Backpropagate from a scalar root, returning gradients for every node.
    pub fn backward(&self, root: NodeId) -> Gradients {
        assert_eq!(self.len_of(root), 1, "backward: root must be a scalar");
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        grads[root.0][0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            let node = &self.nodes[i];
            // Split borrows: take the output gradient before mutating parents.
            let g = std::mem::take(&mut grads[i]);
            match &node.op {
                Op::Leaf => {}
                Op::Affine { w, b, x } => {
                    let (m, n) = (self.nodes[w.0].rows, self.nodes[w.0].cols);
                    let xv = self.nodes[x.0].value.clone();
                    let wv = &self.nodes[w.0].value;
                    let mut dx = vec![0.0; n];
                    for ii in 0..m {
                        let gi = g[ii];
                        let row = &wv[ii * n..(ii + 1) * n];
                        for jj in 0..n {
                            dx[jj] += row[jj] * gi;
                        }
                    }
                    for ii in 0..m {
                        let gi = g[ii];
                        let dw_row = &mut grads[w.0][ii * n..(ii + 1) * n];
                        for jj in 0..n {
                            dw_row[jj] += gi * xv[jj];
                        }
                    }
                    for ii in 0..m {
                        grads[b.0][ii] += g[ii];
                    }
                    for jj in 0..n {
                        grads[x.0][jj] += dx[jj];
                    }
                }
                Op::MatVec { w, x } => {
                    let (m, n) = (self.nodes[w.0].rows, self.nodes[w.0].cols);
                    let xv = self.nodes[x.0].value.clone();
                    let wv = &self.nodes[w.0].value;
                    let mut dx = vec![0.0; n];
                    for ii in 0..m {
                        let gi = g[ii];
                        let row = &wv[ii * n..(ii + 1) * n];
                        for jj in 0..n {
                            dx[jj] += row[jj] * gi;
                        }
                    }
                    for ii in 0..m {
                        let gi = g[ii];
                        let dw_row = &mut grads[w.0][ii * n..(ii + 1) * n];
                        for jj in 0..n {
                            dw_row[jj] += gi * xv[jj];
                        }
                    }
                    for jj in 0..n {
                        grads[x.0][jj] += dx[jj];
                    }
                }
                Op::MatTVec { m, x } => {
                    let (r, c) = (self.nodes[m.0].rows, self.nodes[m.0].cols);
                    let xv = self.nodes[x.0].value.clone();
                    let mv = &self.nodes[m.0].value;
                    let mut dx = vec![0.0; r];
                    for t in 0..r {
                        let row = &mv[t * c..(t + 1) * c];
                        let mut acc = 0.0;
                        for j in 0..c {
                            acc += row[j] * g[j];
                        }
                        dx[t] = acc;
                    }
                    for t in 0..r {
                        let xt = xv[t];
                        let dm_row = &mut grads[m.0][t * c..(t + 1) * c];
                        for j in 0..c {
                            dm_row[j] += xt * g[j];
                        }
                    }
                    for t in 0..r {
                        grads[x.0][t] += dx[t];
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p.0].value.len();
                        for j in 0..len {
                            grads[p.0][j] += g[offset + j];
                        }
                        offset += len;
                    }
                }
                Op::Slice { x, start } => {
                    for (j, gj) in g.iter().enumerate() {
                        grads[x.0][start + j] += gj;
                    }
                }
                Op::Add { a, b } => {
                    for (j, gj) in g.iter().enumerate() {
                        grads[a.0][j] += gj;
                    }
                    for (j, gj) in g.iter().enumerate() {
                        grads[b.0][j] += gj;
                    }
                }
                Op::Sub { a, b } => {
                    for (j, gj) in g.iter().enumerate() {
                        grads[a.0][j] += gj;
                    }
                    for (j, gj) in g.iter().enumerate() {
                        grads[b.0][j] -= gj;
                    }
                }
                Op::Mul { a, b } => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    for (j, gj) in g.iter().enumerate() {
                        grads[a.0][j] += gj * bv[j];
                    }
                    for (j, gj) in g.iter().enumerate() {
                        grads[b.0][j] += gj * av[j];
                    }
                }
                Op::ScaleScalar { s, x } => {
                    let sv = self.nodes[s.0].value[0];
                    let xv = self.nodes[x.0].value.clone();
                    let mut ds = 0.0;
                    for (j, gj) in g.iter().enumerate() {
                        ds += gj * xv[j];
                        grads[x.0][j] += sv * gj;
                    }
                    grads[s.0][0] += ds;
                }
                Op::AffineConst { a, x } => {
                    for (j, gj) in g.iter().enumerate() {
                        grads[x.0][j] += a * gj;
                    }
                }
                Op::Sigmoid { x } => {
                    let yv = &node.value;
                    for (j, gj) in g.iter().enumerate() {
                        grads[x.0][j] += gj * yv[j] * (1.0 - yv[j]);
                    }
                }
                Op::Tanh { x } => {
                    let yv = &node.value;
                    for (j, gj) in g.iter().enumerate() {
                        grads[x.0][j] += gj * (1.0 - yv[j] * yv[j]);
                    }
                }
                Op::Relu { x } => {
                    let xv = &self.nodes[x.0].value;
                    for (j, gj) in g.iter().enumerate() {
                        if xv[j] > 0.0 {
                            grads[x.0][j] += gj;
                        }
                    }
                }
                Op::Softmax { x } => {
                    let yv = &node.value;
                    let dotp: f64 = yv.iter().zip(g.iter()).map(|(&y, &gj)| y * gj).sum();
                    for j in 0..yv.len() {
                        grads[x.0][j] += yv[j] * (g[j] - dotp);
                    }
                }
                Op::Dot { a, b } => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    let g0 = g[0];
                    for j in 0..av.len() {
                        grads[a.0][j] += g0 * bv[j];
                    }
                    for j in 0..bv.len() {
                        grads[b.0][j] += g0 * av[j];
                    }
                }
                Op::Abs { x } => {
                    let xv = &self.nodes[x.0].value;
                    for (j, gj) in g.iter().enumerate() {
                        let s = if xv[j] > 0.0 {
                            1.0
                        } else if xv[j] < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        grads[x.0][j] += gj * s;
                    }
                }
                Op::MeanOf { parts } => {
                    let share = g[0] / parts.len() as f64;
                    for &p in parts {
                        grads[p.0][0] += share;
                    }
                }
                Op::SumElems { x } => {
                    let g0 = g[0];
                    for v in grads[x.0].iter_mut() {
                        *v += g0;
                    }
                }
            }
            grads[i] = g;
        }
        Gradients { grads }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences of a scalar-valued tape program over a set
    /// of leaves, compared against one reverse pass.
    fn fd_check(
        leaves: &[Vec<f64>],
        build: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
        tol: f64,
    ) {
        let eval = |vals: &[Vec<f64>]| -> f64 {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = vals.iter().map(|v| tape.leaf(v.clone())).collect();
            let out = build(&mut tape, &ids);
            tape.value(out)[0]
        };

        let mut tape = Tape::new();
        let ids: Vec<NodeId> = leaves.iter().map(|v| tape.leaf(v.clone())).collect();
        let out = build(&mut tape, &ids);
        let grads = tape.backward(out);

        let h = 1e-5;
        for (li, leaf) in leaves.iter().enumerate() {
            for ci in 0..leaf.len() {
                let mut plus = leaves.to_vec();
                plus[li][ci] += h;
                let mut minus = leaves.to_vec();
                minus[li][ci] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let analytic = grads.wrt(ids[li])[ci];
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    ((analytic - numeric) / denom).abs() < tol,
                    "leaf {li} coord {ci}: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn affine_matches_finite_differences() {
        let w = vec![0.3, -0.5, 0.8, 1.1, 0.2, -0.9]; // 2x3
        let b = vec![0.1, -0.2];
        let x = vec![0.5, -1.3, 0.7];
        let f = |wv: &Vec<f64>, bv: &Vec<f64>, xv: &Vec<f64>| {
            let mut t = Tape::new();
            let wid = t.leaf_matrix(wv.clone(), 2, 3);
            let bid = t.leaf(bv.clone());
            let xid = t.leaf(xv.clone());
            let y = t.affine(wid, bid, xid);
            // Weight the outputs unevenly so gradients differ per row.
            let coeffs = t.leaf(vec![1.0, 2.0]);
            let d = t.dot(y, coeffs);
            t.value(d)[0]
        };
        let mut tape = Tape::new();
        let wid = tape.leaf_matrix(w.clone(), 2, 3);
        let bid = tape.leaf(b.clone());
        let xid = tape.leaf(x.clone());
        let y = tape.affine(wid, bid, xid);
        let coeffs = tape.leaf(vec![1.0, 2.0]);
        let loss = tape.dot(y, coeffs);
        let grads = tape.backward(loss);
        let h = 1e-6;
        for i in 0..w.len() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += h;
            wm[i] -= h;
            let numeric = (f(&wp, &b, &x) - f(&wm, &b, &x)) / (2.0 * h);
            assert!((grads.wrt(wid)[i] - numeric).abs() < 1e-6, "W coord {i}");
        }
        for i in 0..b.len() {
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[i] += h;
            bm[i] -= h;
            let numeric = (f(&w, &bp, &x) - f(&w, &bm, &x)) / (2.0 * h);
            assert!((grads.wrt(bid)[i] - numeric).abs() < 1e-6, "b coord {i}");
        }
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let numeric = (f(&w, &b, &xp) - f(&w, &b, &xm)) / (2.0 * h);
            assert!((grads.wrt(xid)[i] - numeric).abs() < 1e-6, "x coord {i}");
        }
    }

    #[test]
    fn matrix_leaf_gradients_match_finite_differences() {
        let w = vec![0.3, -0.5, 0.8, 1.1, 0.2, -0.9];
        let x = vec![0.5, -1.3, 0.7];
        let mut tape = Tape::new();
        let wid = tape.leaf_matrix(w.clone(), 2, 3);
        let xid = tape.leaf(x.clone());
        let y = tape.matvec(wid, xid);
        let loss = tape.sum_elems(y);
        let grads = tape.backward(loss);
        let h = 1e-6;
        for i in 0..w.len() {
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let f = |wv: &Vec<f64>| {
                let mut t = Tape::new();
                let wid = t.leaf_matrix(wv.clone(), 2, 3);
                let xid = t.leaf(x.clone());
                let y = t.matvec(wid, xid);
                let l = t.sum_elems(y);
                t.value(l)[0]
            };
            let numeric = (f(&wp) - f(&wm)) / (2.0 * h);
            let analytic = grads.wrt(wid)[i];
            assert!((analytic - numeric).abs() < 1e-6, "coord {i}");
        }
    }

    #[test]
    fn elementwise_and_reductions_match_finite_differences() {
        let leaves = vec![vec![0.4, -0.7, 1.2], vec![-0.3, 0.9, 0.5]];
        fd_check(
            &leaves,
            |tape, ids| {
                let s = tape.mul(ids[0], ids[1]);
                let t = tape.tanh(s);
                let u = tape.sigmoid(t);
                let r = tape.relu(u);
                let a = tape.add(r, ids[0]);
                let d = tape.sub(a, ids[1]);
                let sq = tape.mul(d, d);
                tape.sum_elems(sq)
            },
            1e-5,
        );
    }

    #[test]
    fn softmax_concat_slice_match_finite_differences() {
        let leaves = vec![vec![0.2, -1.1], vec![0.7, 0.3, -0.4]];
        fd_check(
            &leaves,
            |tape, ids| {
                let c = tape.concat(&[ids[0], ids[1]]);
                let sm = tape.softmax(c);
                let sl = tape.slice(sm, 1, 3);
                let sc = tape.affine_const(2.5, -0.1, sl);
                tape.sum_elems(sc)
            },
            1e-5,
        );
    }

    #[test]
    fn scalar_ops_match_finite_differences() {
        let leaves = vec![vec![0.6], vec![0.4, -0.9, 1.3], vec![0.2, 0.8, -0.5]];
        fd_check(
            &leaves,
            |tape, ids| {
                let g = tape.sigmoid(ids[0]);
                let scaled = tape.scale_scalar(g, ids[1]);
                let omg = tape.one_minus(g);
                let other = tape.scale_scalar(omg, ids[2]);
                let mix = tape.add(scaled, other);
                let d = tape.dot(mix, ids[1]);
                let a = tape.abs(d);
                let e = tape.mean_of(&[a, d]);
                tape.sum_elems(e)
            },
            1e-5,
        );
    }

    #[test]
    fn mat_t_vec_matches_finite_differences() {
        let m = vec![0.1, 0.5, -0.3, 0.8, 0.2, -0.6]; // 3x2
        let x = vec![0.7, -0.2, 0.4];
        let mut tape = Tape::new();
        let mid = tape.leaf_matrix(m.clone(), 3, 2);
        let xid = tape.leaf(x.clone());
        let y = tape.mat_t_vec(mid, xid);
        let loss = tape.sum_elems(y);
        let grads = tape.backward(loss);
        let h = 1e-6;
        let f = |mv: &Vec<f64>, xv: &Vec<f64>| {
            let mut t = Tape::new();
            let mid = t.leaf_matrix(mv.clone(), 3, 2);
            let xid = t.leaf(xv.clone());
            let y = t.mat_t_vec(mid, xid);
            let l = t.sum_elems(y);
            t.value(l)[0]
        };
        for i in 0..m.len() {
            let mut mp = m.clone();
            mp[i] += h;
            let mut mm = m.clone();
            mm[i] -= h;
            let numeric = (f(&mp, &x) - f(&mm, &x)) / (2.0 * h);
            assert!((grads.wrt(mid)[i] - numeric).abs() < 1e-6);
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let numeric = (f(&m, &xp) - f(&m, &xm)) / (2.0 * h);
            assert!((grads.wrt(xid)[i] - numeric).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_output_is_simplex() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec![5.0, -3.0, 700.0, 0.0]);
        let y = tape.softmax(x);
        let v = tape.value(y);
        assert!(v.iter().all(|&p| p >= 0.0));
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_non_finite_reports_label() {
        let mut tape = Tape::new();
        let a = tape.leaf(vec![1.0, 2.0]);
        let b = tape.leaf(vec![f64::NAN, 0.0]);
        tape.set_label(b, "poisoned-input");
        let _ = tape.add(a, b);
        let (id, label) = tape.first_non_finite().unwrap();
        assert_eq!(id, b);
        assert_eq!(label, Some("poisoned-input"));
    }
}
