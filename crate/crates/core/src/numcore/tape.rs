//! Recording tape for reverse-mode gradients over vector-valued nodes.
//!
//! Values are computed eagerly at record time with the same kernels as
//! the plain evaluation path, so recorded and eager forwards agree
//! bitwise. `backward` walks the tape in reverse, accumulating exact
//! vector-Jacobian products. The operator set is fixed to what the
//! framework needs; this is not a general autodiff system.

use crate::error::{Error, Result};
use crate::numcore::matrix::{
    self, cross_entropy_from_logits, matvec_raw, matvec_t_raw, softmax, softmax_pair,
    stable_sigmoid, DenseMatrix,
};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatVec { m: NodeId, x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Abs { a: NodeId },
    Tanh { a: NodeId },
    Sigmoid { a: NodeId },
    Concat { parts: Vec<NodeId> },
    Stack { parts: Vec<NodeId> },
    Component { a: NodeId, index: usize },
    Dot { a: NodeId, b: NodeId },
    ScaleNode { s: NodeId, v: NodeId },
    ScaleConst { c: f64, a: NodeId },
    SumSq { a: NodeId },
    SoftmaxPair { scores: NodeId },
    CrossEntropyLogits { logits: NodeId, label: usize },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
    rows: usize,
    cols: usize,
}

/// Gradients of a scalar root with respect to every node.
pub struct Grads {
    adjoints: Vec<Vec<f64>>,
}

impl Grads {
    /// Gradient with respect to `id`; zeros if the node is unreachable
    /// from the root.
    pub fn wrt(&self, id: NodeId) -> &[f64] {
        &self.adjoints[id.0]
    }
}

/// The tape itself. Nodes are appended in evaluation order, so every
/// node's inputs precede it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value computed for a node at record time.
    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Scalar value of a length-1 node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        let v = self.value(id);
        if v.len() != 1 {
            return Err(Error::Shape(format!(
                "expected scalar node, found length {}",
                v.len()
            )));
        }
        Ok(v[0])
    }

    fn push(&mut self, op: Op, value: Vec<f64>, rows: usize, cols: usize) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            rows,
            cols,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn len_of(&self, id: NodeId) -> usize {
        self.nodes[id.0].value.len()
    }

    fn want_equal_len(&self, a: NodeId, b: NodeId, what: &str) -> Result<usize> {
        let (la, lb) = (self.len_of(a), self.len_of(b));
        if la != lb {
            return Err(Error::Shape(format!("{what}: lengths {la} and {lb}")));
        }
        Ok(la)
    }

    /// Vector leaf.
    pub fn leaf(&mut self, values: &[f64]) -> NodeId {
        let n = values.len();
        self.push(Op::Leaf, values.to_vec(), n, 1)
    }

    /// Matrix leaf; the stored shape drives [`matvec`](Self::matvec).
    pub fn matrix_leaf(&mut self, m: &DenseMatrix) -> NodeId {
        let (r, c) = (m.rows(), m.cols());
        self.push(Op::Leaf, m.data().to_vec(), r, c)
    }

    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId> {
        let (rows, cols) = (self.nodes[m.0].rows, self.nodes[m.0].cols);
        if self.len_of(x) != cols {
            return Err(Error::Shape(format!(
                "matvec: {rows}x{cols} against vector of length {}",
                self.len_of(x)
            )));
        }
        let value = matvec_raw(&self.nodes[m.0].value, rows, cols, &self.nodes[x.0].value);
        Ok(self.push(Op::MatVec { m, x }, value, rows, 1))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let n = self.want_equal_len(a, b, "add")?;
        let value = matrix::add(&self.nodes[a.0].value, &self.nodes[b.0].value);
        Ok(self.push(Op::Add { a, b }, value, n, 1))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let n = self.want_equal_len(a, b, "sub")?;
        let value = matrix::sub(&self.nodes[a.0].value, &self.nodes[b.0].value);
        Ok(self.push(Op::Sub { a, b }, value, n, 1))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let n = self.want_equal_len(a, b, "mul")?;
        let value = matrix::hadamard(&self.nodes[a.0].value, &self.nodes[b.0].value);
        Ok(self.push(Op::Mul { a, b }, value, n, 1))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let value: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x.abs()).collect();
        let n = value.len();
        self.push(Op::Abs { a }, value, n, 1)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x.tanh()).collect();
        let n = value.len();
        self.push(Op::Tanh { a }, value, n, 1)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .map(|x| stable_sigmoid(*x))
            .collect();
        let n = value.len();
        self.push(Op::Sigmoid { a }, value, n, 1)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Input("concat of zero nodes".into()));
        }
        let mut value = Vec::new();
        for p in parts {
            value.extend_from_slice(&self.nodes[p.0].value);
        }
        let n = value.len();
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
            },
            value,
            n,
            1,
        ))
    }

    /// Stacks scalar nodes into one vector.
    pub fn stack(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Input("stack of zero nodes".into()));
        }
        let mut value = Vec::with_capacity(parts.len());
        for p in parts {
            if self.len_of(*p) != 1 {
                return Err(Error::Shape("stack expects scalar nodes".into()));
            }
            value.push(self.nodes[p.0].value[0]);
        }
        let n = value.len();
        Ok(self.push(
            Op::Stack {
                parts: parts.to_vec(),
            },
            value,
            n,
            1,
        ))
    }

    /// Extracts one component as a scalar node.
    pub fn component(&mut self, a: NodeId, index: usize) -> Result<NodeId> {
        if index >= self.len_of(a) {
            return Err(Error::Shape(format!(
                "component {index} of length-{} node",
                self.len_of(a)
            )));
        }
        let value = vec![self.nodes[a.0].value[index]];
        Ok(self.push(Op::Component { a, index }, value, 1, 1))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.want_equal_len(a, b, "dot")?;
        let value = vec![matrix::dot(&self.nodes[a.0].value, &self.nodes[b.0].value)];
        Ok(self.push(Op::Dot { a, b }, value, 1, 1))
    }

    /// Scales vector `v` by scalar node `s`.
    pub fn scale_node(&mut self, s: NodeId, v: NodeId) -> Result<NodeId> {
        if self.len_of(s) != 1 {
            return Err(Error::Shape("scale_node expects a scalar multiplier".into()));
        }
        let c = self.nodes[s.0].value[0];
        let value = matrix::scale(c, &self.nodes[v.0].value);
        let n = value.len();
        Ok(self.push(Op::ScaleNode { s, v }, value, n, 1))
    }

    pub fn scale_const(&mut self, c: f64, a: NodeId) -> NodeId {
        let value = matrix::scale(c, &self.nodes[a.0].value);
        let n = value.len();
        self.push(Op::ScaleConst { c, a }, value, n, 1)
    }

    /// Sum of squared entries, as a scalar node.
    pub fn sum_sq(&mut self, a: NodeId) -> NodeId {
        let value = vec![matrix::norm_sq(&self.nodes[a.0].value)];
        self.push(Op::SumSq { a }, value, 1, 1)
    }

    /// Softmax over a length-2 score node.
    pub fn softmax_pair(&mut self, scores: NodeId) -> Result<NodeId> {
        if self.len_of(scores) != 2 {
            return Err(Error::Shape("softmax_pair expects two scores".into()));
        }
        let s = &self.nodes[scores.0].value;
        let (wa, wb) = softmax_pair(s[0], s[1]);
        Ok(self.push(Op::SoftmaxPair { scores }, vec![wa, wb], 2, 1))
    }

    /// Cross-entropy of softmax(logits) against a hard label.
    pub fn cross_entropy_logits(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        if label >= self.len_of(logits) {
            return Err(Error::Label(format!(
                "label {label} outside {} logits",
                self.len_of(logits)
            )));
        }
        let value = vec![cross_entropy_from_logits(&self.nodes[logits.0].value, label)];
        Ok(self.push(Op::CrossEntropyLogits { logits, label }, value, 1, 1))
    }

    /// Reverse pass from a scalar root, seed 1.
    pub fn backward(&self, root: NodeId) -> Result<Grads> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward on an empty tape".into()));
        }
        if self.len_of(root) != 1 {
            return Err(Error::State(format!(
                "backward root must be scalar, found length {}",
                self.len_of(root)
            )));
        }
        let mut adj: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        adj[root.0][0] = 1.0;

        for i in (0..=root.0).rev() {
            let g = adj[i].clone();
            if g.iter().all(|x| *x == 0.0) {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatVec { m, x } => {
                    let (rows, cols) = (self.nodes[m.0].rows, self.nodes[m.0].cols);
                    let mdata = &self.nodes[m.0].value;
                    let xdata = &self.nodes[x.0].value;
                    let dm = &mut adj[m.0];
                    for r in 0..rows {
                        for c in 0..cols {
                            dm[r * cols + c] += g[r] * xdata[c];
                        }
                    }
                    let dx = matvec_t_raw(mdata, rows, cols, &g);
                    for (acc, d) in adj[x.0].iter_mut().zip(&dx) {
                        *acc += d;
                    }
                }
                Op::Add { a, b } => {
                    for (acc, gi) in adj[a.0].iter_mut().zip(&g) {
                        *acc += gi;
                    }
                    for (acc, gi) in adj[b.0].iter_mut().zip(&g) {
                        *acc += gi;
                    }
                }
                Op::Sub { a, b } => {
                    for (acc, gi) in adj[a.0].iter_mut().zip(&g) {
                        *acc += gi;
                    }
                    for (acc, gi) in adj[b.0].iter_mut().zip(&g) {
                        *acc -= gi;
                    }
                }
                Op::Mul { a, b } => {
                    let bv = &self.nodes[b.0].value;
                    for ((acc, gi), bi) in adj[a.0].iter_mut().zip(&g).zip(bv) {
                        *acc += gi * bi;
                    }
                    let av = &self.nodes[a.0].value;
                    for ((acc, gi), ai) in adj[b.0].iter_mut().zip(&g).zip(av) {
                        *acc += gi * ai;
                    }
                }
                Op::Abs { a } => {
                    let av = &self.nodes[a.0].value;
                    for ((acc, gi), ai) in adj[a.0].iter_mut().zip(&g).zip(av) {
                        let s = if *ai > 0.0 {
                            1.0
                        } else if *ai < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        *acc += gi * s;
                    }
                }
                Op::Tanh { a } => {
                    let yv = &self.nodes[i].value;
                    for ((acc, gi), yi) in adj[a.0].iter_mut().zip(&g).zip(yv) {
                        *acc += gi * (1.0 - yi * yi);
                    }
                }
                Op::Sigmoid { a } => {
                    let yv = &self.nodes[i].value;
                    for ((acc, gi), yi) in adj[a.0].iter_mut().zip(&g).zip(yv) {
                        *acc += gi * yi * (1.0 - yi);
                    }
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        for (acc, gi) in adj[p.0].iter_mut().zip(&g[off..off + n]) {
                            *acc += gi;
                        }
                        off += n;
                    }
                }
                Op::Stack { parts } => {
                    for (k, p) in parts.iter().enumerate() {
                        adj[p.0][0] += g[k];
                    }
                }
                Op::Component { a, index } => {
                    adj[a.0][*index] += g[0];
                }
                Op::Dot { a, b } => {
                    let bv = &self.nodes[b.0].value;
                    for (acc, bi) in adj[a.0].iter_mut().zip(bv) {
                        *acc += g[0] * bi;
                    }
                    let av = &self.nodes[a.0].value;
                    for (acc, ai) in adj[b.0].iter_mut().zip(av) {
                        *acc += g[0] * ai;
                    }
                }
                Op::ScaleNode { s, v } => {
                    let sv = self.nodes[s.0].value[0];
                    let vv = &self.nodes[v.0].value;
                    adj[s.0][0] += matrix::dot(&g, vv);
                    for (acc, gi) in adj[v.0].iter_mut().zip(&g) {
                        *acc += sv * gi;
                    }
                }
                Op::ScaleConst { c, a } => {
                    for (acc, gi) in adj[a.0].iter_mut().zip(&g) {
                        *acc += c * gi;
                    }
                }
                Op::SumSq { a } => {
                    let av = &self.nodes[a.0].value;
                    for (acc, ai) in adj[a.0].iter_mut().zip(av) {
                        *acc += 2.0 * g[0] * ai;
                    }
                }
                Op::SoftmaxPair { scores } => {
                    let w = &self.nodes[i].value;
                    let common = w[0] * w[1] * (g[0] - g[1]);
                    adj[scores.0][0] += common;
                    adj[scores.0][1] -= common;
                }
                Op::CrossEntropyLogits { logits, label } => {
                    let p = softmax(&self.nodes[logits.0].value);
                    for (k, (acc, pk)) in adj[logits.0].iter_mut().zip(&p).enumerate() {
                        let onehot = if k == *label { 1.0 } else { 0.0 };
                        *acc += g[0] * (pk - onehot);
                    }
                }
            }
        }
        Ok(Grads { adjoints: adj })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut p = x.to_vec();
        for i in 0..x.len() {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            g[i] = (up - down) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
    }

    #[test]
    fn linear_scale_gradient_is_constant() {
        let mut t = Tape::new();
        let x = t.leaf(&[2.0]);
        let y = t.scale_const(3.0, x);
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x), &[3.0]);
    }

    #[test]
    fn sum_sq_gradient_is_two_x() {
        let mut t = Tape::new();
        let v = t.leaf(&[1.0, -2.0]);
        let loss = t.sum_sq(v);
        assert_eq!(t.scalar(loss).unwrap(), 5.0);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(v), &[2.0, -4.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut t = Tape::new();
        let v = t.leaf(&[1.0, 2.0]);
        assert!(matches!(t.backward(v), Err(Error::State(_))));
    }

    #[test]
    fn matvec_gradients_match_finite_differences() {
        let m = DenseMatrix::new(2, 3, vec![0.3, -1.0, 2.0, 0.7, 0.1, -0.4]).unwrap();
        let x = [0.5, -0.2, 1.5];
        let eval = |mdata: &[f64], xv: &[f64]| {
            let y = matvec_raw(mdata, 2, 3, xv);
            matrix::norm_sq(&y)
        };

        let mut t = Tape::new();
        let ml = t.matrix_leaf(&m);
        let xl = t.leaf(&x);
        let y = t.matvec(ml, xl).unwrap();
        let loss = t.sum_sq(y);
        let g = t.backward(loss).unwrap();

        let fd_m = central_diff(|md| eval(md, &x), m.data(), 1e-6);
        for (a, n) in g.wrt(ml).iter().zip(&fd_m) {
            assert!(rel_err(*a, *n) < 1e-6, "matrix grad {a} vs {n}");
        }
        let fd_x = central_diff(|xv| eval(m.data(), xv), &x, 1e-6);
        for (a, n) in g.wrt(xl).iter().zip(&fd_x) {
            assert!(rel_err(*a, *n) < 1e-6, "input grad {a} vs {n}");
        }
    }

    #[test]
    fn softmax_pair_gradient_matches_finite_differences() {
        let s = [0.4, -1.1];
        let mut t = Tape::new();
        let sl = t.leaf(&s);
        let w = t.softmax_pair(sl).unwrap();
        let tgt = t.leaf(&[0.9, 0.1]);
        let d = t.sub(w, tgt).unwrap();
        let loss = t.sum_sq(d);
        let g = t.backward(loss).unwrap();

        let fd = central_diff(
            |sv| {
                let (wa, wb) = softmax_pair(sv[0], sv[1]);
                (wa - 0.9) * (wa - 0.9) + (wb - 0.1) * (wb - 0.1)
            },
            &s,
            1e-6,
        );
        for (a, n) in g.wrt(sl).iter().zip(&fd) {
            assert!(rel_err(*a, *n) < 1e-6, "{a} vs {n}");
        }
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let logits = [0.2, -0.5, 1.3];
        let mut t = Tape::new();
        let ll = t.leaf(&logits);
        let loss = t.cross_entropy_logits(ll, 2).unwrap();
        let g = t.backward(loss).unwrap();
        let p = softmax(&logits);
        let want = [p[0], p[1], p[2] - 1.0];
        for (a, b) in g.wrt(ll).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn composite_network_gradient_matches_finite_differences() {
        let w1 = DenseMatrix::new(3, 2, vec![0.5, -0.3, 0.8, 0.2, -0.7, 0.4]).unwrap();
        let b1 = [0.1, -0.2, 0.05];
        let w2 = DenseMatrix::new(1, 3, vec![1.2, -0.6, 0.9]).unwrap();
        let x = [0.3, -1.4];

        let all: Vec<f64> = w1
            .data()
            .iter()
            .chain(&b1)
            .chain(w2.data())
            .cloned()
            .collect();
        let eval = |p: &[f64]| {
            let h = matvec_raw(&p[0..6], 3, 2, &x);
            let h: Vec<f64> = h
                .iter()
                .zip(&p[6..9])
                .map(|(v, b)| (v + b).tanh())
                .collect();
            let o = matvec_raw(&p[9..12], 1, 3, &h);
            stable_sigmoid(o[0])
        };

        let mut t = Tape::new();
        let w1l = t.matrix_leaf(&w1);
        let b1l = t.leaf(&b1);
        let w2l = t.matrix_leaf(&w2);
        let xl = t.leaf(&x);
        let h0 = t.matvec(w1l, xl).unwrap();
        let h1 = t.add(h0, b1l).unwrap();
        let h2 = t.tanh(h1);
        let o = t.matvec(w2l, h2).unwrap();
        let y = t.sigmoid(o);
        let loss = t.component(y, 0).unwrap();
        let g = t.backward(loss).unwrap();

        let analytic: Vec<f64> = g
            .wrt(w1l)
            .iter()
            .chain(g.wrt(b1l))
            .chain(g.wrt(w2l))
            .cloned()
            .collect();
        let fd = central_diff(|p| eval(p), &all, 1e-5);
        for (a, n) in analytic.iter().zip(&fd) {
            assert!(rel_err(*a, *n) < 1e-6, "{a} vs {n}");
        }
    }

    #[test]
    fn fan_out_accumulates_both_paths() {
        // loss = dot(v, v) + sum_sq(v) → gradient 4v.
        let mut t = Tape::new();
        let v = t.leaf(&[1.5, -0.5]);
        let d = t.dot(v, v).unwrap();
        let s = t.sum_sq(v);
        let loss = t.add(d, s).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(v), &[6.0, -2.0]);
    }

    #[test]
    fn abs_and_mul_and_concat_gradients_match_fd() {
        let a = [0.7, -1.2, 0.4];
        let b = [-0.3, 0.9, 1.1];
        let eval = |p: &[f64]| {
            let (av, bv) = p.split_at(3);
            let d: Vec<f64> = av.iter().zip(bv).map(|(x, y)| (x - y).abs()).collect();
            let m: Vec<f64> = av.iter().zip(bv).map(|(x, y)| x * y).collect();
            let cat: Vec<f64> = d.iter().chain(&m).cloned().collect();
            matrix::norm_sq(&cat)
        };
        let all: Vec<f64> = a.iter().chain(&b).cloned().collect();

        let mut t = Tape::new();
        let al = t.leaf(&a);
        let bl = t.leaf(&b);
        let diff = t.sub(al, bl).unwrap();
        let d = t.abs(diff);
        let m = t.mul(al, bl).unwrap();
        let cat = t.concat(&[d, m]).unwrap();
        let loss = t.sum_sq(cat);
        let g = t.backward(loss).unwrap();
        let analytic: Vec<f64> = g.wrt(al).iter().chain(g.wrt(bl)).cloned().collect();

        let fd = central_diff(|p| eval(p), &all, 1e-6);
        for (x, n) in analytic.iter().zip(&fd) {
            assert!(rel_err(*x, *n) < 1e-6, "{x} vs {n}");
        }
    }

    #[test]
    fn scale_node_and_stack_gradients_match_fd() {
        let params = [0.8, 0.3, -0.6, 1.4];
        let eval = |p: &[f64]| {
            let s = p[0];
            let v = &p[1..];
            let scaled: Vec<f64> = v.iter().map(|x| s * x).collect();
            let l0 = scaled.iter().sum::<f64>();
            let l1 = matrix::norm_sq(&scaled);
            cross_entropy_from_logits(&[l0, l1], 0)
        };

        let mut t = Tape::new();
        let sl = t.leaf(&params[0..1]);
        let vl = t.leaf(&params[1..]);
        let scaled = t.scale_node(sl, vl).unwrap();
        let ones = t.leaf(&[1.0, 1.0, 1.0]);
        let l0 = t.dot(scaled, ones).unwrap();
        let l1 = t.sum_sq(scaled);
        let logits = t.stack(&[l0, l1]).unwrap();
        let loss = t.cross_entropy_logits(logits, 0).unwrap();
        let g = t.backward(loss).unwrap();
        let analytic: Vec<f64> = g.wrt(sl).iter().chain(g.wrt(vl)).cloned().collect();

        let fd = central_diff(|p| eval(p), &params, 1e-6);
        for (a, n) in analytic.iter().zip(&fd) {
            assert!(rel_err(*a, *n) < 1e-6, "{a} vs {n}");
        }
    }

    #[test]
    fn recorded_forward_matches_eager_kernels_bitwise() {
        let m = DenseMatrix::new(2, 2, vec![0.9, -0.4, 0.3, 1.7]).unwrap();
        let x = [0.123456789, -0.987654321];
        let mut t = Tape::new();
        let ml = t.matrix_leaf(&m);
        let xl = t.leaf(&x);
        let y = t.matvec(ml, xl).unwrap();
        let z = t.tanh(y);
        let eager = m.matvec(&x).unwrap();
        let eager: Vec<f64> = eager.iter().map(|v| v.tanh()).collect();
        for (a, b) in t.value(z).iter().zip(&eager) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
