//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every value produced during a forward pass is a node on the [`Tape`]. A
//! node records which primitive produced it and its input node ids; inputs
//! always precede outputs, so a single reverse sweep visits every node once.
//!
//! The primitive set is closed: matmul (with optional transposes), add,
//! elementwise multiply, elementwise min, tanh, sigmoid, log, concat, row
//! gather, row scatter-add, reduce-sum and masked softmax. Binary elementwise
//! primitives broadcast rank-2 operands along extents of size 1. All model
//! math is composed from these.

use crate::error::{Error, Result};
use crate::grad::{GradientSet, ParamSet};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    Constant,
    Param,
    MatMul,
    Add,
    Mul,
    Min,
    Tanh,
    Sigmoid,
    Log,
    Concat,
    Gather,
    ScatterAdd,
    Sum,
    MaskedSoftmax,
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Gather { src: Var, rows: Vec<usize> },
    ScatterAdd { src: Var, rows: Vec<usize> },
    Sum(Var),
    MaskedSoftmax { logits: Var, mask: Vec<bool> },
}

impl Op {
    fn primitive(&self) -> Primitive {
        match self {
            Op::Constant => Primitive::Constant,
            Op::Param(_) => Primitive::Param,
            Op::MatMul { .. } => Primitive::MatMul,
            Op::Add(..) => Primitive::Add,
            Op::Mul(..) => Primitive::Mul,
            Op::Min(..) => Primitive::Min,
            Op::Tanh(_) => Primitive::Tanh,
            Op::Sigmoid(_) => Primitive::Sigmoid,
            Op::Log(_) => Primitive::Log,
            Op::Concat { .. } => Primitive::Concat,
            Op::Gather { .. } => Primitive::Gather,
            Op::ScatterAdd { .. } => Primitive::ScatterAdd,
            Op::Sum(_) => Primitive::Sum,
            Op::MaskedSoftmax { .. } => Primitive::MaskedSoftmax,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Param(_) => vec![],
            Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Add(a, b) | Op::Mul(a, b) | Op::Min(a, b) => vec![*a, *b],
            Op::Tanh(a) | Op::Sigmoid(a) | Op::Log(a) | Op::Sum(a) => vec![*a],
            Op::Concat { parts, .. } => parts.clone(),
            Op::Gather { src, .. } | Op::ScatterAdd { src, .. } => vec![*src],
            Op::MaskedSoftmax { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// One entry of the tape as seen from outside: which primitive ran, on which
/// nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TapeEntry {
    pub primitive: Primitive,
    pub inputs: Vec<Var>,
    pub output: Var,
}

/// Per-node adjoints from a reverse sweep.
pub struct Adjoints {
    grads: Vec<Option<Tensor>>,
}

impl Adjoints {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

#[derive(Clone, Debug, Default)]
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn entries(&self) -> impl Iterator<Item = TapeEntry> + '_ {
        self.nodes.iter().enumerate().map(|(i, n)| TapeEntry {
            primitive: n.op.primitive(),
            inputs: n.op.inputs(),
            output: Var(i),
        })
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Binds parameter `index` of a [`ParamSet`] as a differentiable leaf.
    pub fn param(&mut self, index: usize, value: Tensor) -> Var {
        self.push(value, Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a) * op(b)` where `op` transposes when the flag is set.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let out = matmul(self.value(a), ta, self.value(b), tb);
        self.push(out, Op::MatMul { a, b, ta, tb })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = broadcast_zip(self.value(a), self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = broadcast_zip(self.value(a), self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let out = broadcast_zip(self.value(a), self.value(b), f64::min);
        self.push(out, Op::Min(a, b))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// Natural log. Inputs must be strictly positive.
    pub fn log(&mut self, a: Var) -> Var {
        let x = self.value(a);
        debug_assert!(x.data().iter().all(|&v| v > 0.0), "log of non-positive value");
        let out = x.map(f64::ln);
        self.push(out, Op::Log(a))
    }

    /// Concatenates rank-2 tensors along `axis` (0 stacks rows, 1 joins columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        assert!(axis < 2, "concat axis must be 0 or 1");
        let out = {
            let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
            concat(&vals, axis)
        };
        self.push(out, Op::Concat { parts: parts.to_vec(), axis })
    }

    /// Selects rows of a rank-2 tensor, in order, with repetition allowed.
    pub fn gather(&mut self, src: Var, rows: &[usize]) -> Var {
        let out = gather_rows(self.value(src), rows);
        self.push(out, Op::Gather { src, rows: rows.to_vec() })
    }

    /// Adds row `k` of `src` into row `rows[k]` of a zero tensor with
    /// `out_rows` rows. Repeated targets accumulate.
    pub fn scatter_add(&mut self, src: Var, rows: &[usize], out_rows: usize) -> Var {
        let out = scatter_rows(self.value(src), rows, out_rows);
        self.push(out, Op::ScatterAdd { src, rows: rows.to_vec() })
    }

    /// Sum of all elements, as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Softmax over all elements of `logits` restricted to `mask`; masked
    /// entries are exactly zero.
    pub fn masked_softmax(&mut self, logits: Var, mask: &[bool]) -> Result<Var> {
        let out = masked_softmax(self.value(logits), mask)?;
        Ok(self.push(out, Op::MaskedSoftmax { logits, mask: mask.to_vec() }))
    }

    /// Reverse sweep from a scalar node. Returns the adjoint of every node
    /// the loss depends on.
    pub fn backward(&self, loss: Var) -> Result<Adjoints> {
        let loss_val = self.value(loss);
        if loss_val.len() != 1 {
            return Err(Error::NonScalarLoss(loss_val.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(loss_val.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Adjoints { grads })
    }

    /// Gradient of `loss` with respect to every parameter of `params`;
    /// parameters never bound on this tape get zero tensors.
    pub fn backprop(&self, loss: Var, params: &ParamSet) -> Result<GradientSet> {
        let adj = self.backward(loss)?;
        let mut out = GradientSet::zeros_like(params);
        for (id, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Op::Param(index), Some(g)) = (&node.op, &adj.grads[id]) {
                out.get_index_mut(*index).add_assign(g);
            }
        }
        Ok(out)
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul { a, b, ta, tb } => {
                let (av, bv) = (val(*a), val(*b));
                let ga = if *ta { matmul(bv, *tb, g, true) } else { matmul(g, false, bv, !*tb) };
                let gb = if *tb { matmul(g, true, av, *ta) } else { matmul(av, !*ta, g, false) };
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, reduce_to(g, val(*a).shape()));
                accumulate(grads, *b, reduce_to(g, val(*b).shape()));
            }
            Op::Mul(a, b) => {
                let ga = broadcast_zip(g, val(*b), |x, y| x * y);
                let gb = broadcast_zip(g, val(*a), |x, y| x * y);
                accumulate(grads, *a, reduce_to(&ga, val(*a).shape()));
                accumulate(grads, *b, reduce_to(&gb, val(*b).shape()));
            }
            Op::Min(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (wa, wb) = min_routing(av, bv);
                let ga = broadcast_zip(g, &wa, |x, w| x * w);
                let gb = broadcast_zip(g, &wb, |x, w| x * w);
                accumulate(grads, *a, reduce_to(&ga, av.shape()));
                accumulate(grads, *b, reduce_to(&gb, bv.shape()));
            }
            Op::Tanh(a) => {
                let y = &node.value;
                let ga = zip_same(g, y, |gi, yi| gi * (1.0 - yi * yi));
                accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let ga = zip_same(g, y, |gi, yi| gi * yi * (1.0 - yi));
                accumulate(grads, *a, ga);
            }
            Op::Log(a) => {
                let ga = zip_same(g, val(*a), |gi, xi| gi / xi);
                accumulate(grads, *a, ga);
            }
            Op::Concat { parts, axis } => {
                let mut offset = 0;
                for &p in parts {
                    let shape = val(p).shape();
                    let piece = if *axis == 0 {
                        slice_rows(g, offset, shape[0])
                    } else {
                        slice_cols(g, offset, shape[1])
                    };
                    offset += shape[*axis];
                    accumulate(grads, p, piece);
                }
            }
            Op::Gather { src, rows } => {
                let ga = scatter_rows(g, rows, val(*src).rows());
                accumulate(grads, *src, ga);
            }
            Op::ScatterAdd { src, rows } => {
                accumulate(grads, *src, gather_rows(g, rows));
            }
            Op::Sum(a) => {
                accumulate(grads, *a, Tensor::filled(val(*a).shape(), g.item()));
            }
            Op::MaskedSoftmax { logits, mask } => {
                let y = node.value.data();
                let dot: f64 = y.iter().zip(g.data()).map(|(yi, gi)| yi * gi).sum();
                let data = y
                    .iter()
                    .zip(g.data())
                    .zip(mask)
                    .map(|((yi, gi), &m)| if m { yi * (gi - dot) } else { 0.0 })
                    .collect();
                let ga = Tensor::new(node.value.shape().to_vec(), data).expect("softmax grad shape");
                accumulate(grads, *logits, ga);
            }
        }
    }
}

/// Composite helpers. None of these is a primitive; each records a short
/// chain of primitives.
impl Tape {
    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let k = self.constant(Tensor::scalar(k));
        self.mul(a, k)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let one = self.constant(Tensor::scalar(1.0));
        let na = self.neg(a);
        self.add(one, na)
    }

    /// `max(a, 0)` as `-min(-a, 0)`.
    pub fn relu(&mut self, a: Var) -> Var {
        let zero = self.constant(Tensor::scalar(0.0));
        let na = self.neg(a);
        let m = self.min(na, zero);
        self.neg(m)
    }

    /// `max(a, floor)` as `-min(-a, -floor)`.
    pub fn floor_at(&mut self, a: Var, floor: f64) -> Var {
        let f = self.constant(Tensor::scalar(-floor));
        let na = self.neg(a);
        let m = self.min(na, f);
        self.neg(m)
    }

    /// Sum of several same-shaped (or broadcastable) terms, left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Var {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = self.add(acc, t);
        }
        acc
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// `op(a) * op(b)` for rank-2 tensors.
pub fn matmul(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "matmul inner dimension mismatch: {:?}{} x {:?}{}", a.shape(), if ta { "^T" } else { "" }, b.shape(), if tb { "^T" } else { "" });

    let ad = a.data();
    let bd = b.data();
    let a_at = |i: usize, p: usize| if ta { ad[p * ac + i] } else { ad[i * ac + p] };
    let mut out = vec![0.0; m * n];
    if tb {
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a_at(i, p) * bd[j * bc + p];
                }
                out[i * n + j] = s;
            }
        }
    } else {
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = a_at(i, p);
                if x == 0.0 {
                    continue;
                }
                let brow = &bd[p * bc..(p + 1) * bc];
                for (o, &y) in row.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
    }
    Tensor::new(vec![m, n], out).expect("matmul output shape")
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> [usize; 2] {
    assert!(a.len() == 2 && b.len() == 2, "broadcast needs rank-2 operands: {a:?} vs {b:?}");
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("cannot broadcast {a:?} with {b:?}")
        }
    };
    [dim(a[0], b[0]), dim(a[1], b[1])]
}

fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        return zip_same(a, b, f);
    }
    let [r, c] = broadcast_shape(a.shape(), b.shape());
    let (ar, ac, br, bc) = (a.rows(), a.cols(), b.rows(), b.cols());
    let (ad, bd) = (a.data(), b.data());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            let x = ad[(i % ar) * ac + (j % ac)];
            let y = bd[(i % br) * bc + (j % bc)];
            out.push(f(x, y));
        }
    }
    Tensor::new(vec![r, c], out).expect("broadcast output shape")
}

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip output shape")
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let (gr, gc) = (g.rows(), g.cols());
    let (r, c) = (shape[0], shape[1]);
    let mut out = vec![0.0; r * c];
    for i in 0..gr {
        for j in 0..gc {
            out[(i % r) * c + (j % c)] += g.data()[i * gc + j];
        }
    }
    Tensor::new(shape.to_vec(), out).expect("reduce output shape")
}

/// Routing weights for the min backward rule: the smaller operand takes the
/// whole gradient, exact ties split it evenly.
fn min_routing(a: &Tensor, b: &Tensor) -> (Tensor, Tensor) {
    let wa = broadcast_zip(a, b, |x, y| match x.partial_cmp(&y) {
        Some(std::cmp::Ordering::Less) => 1.0,
        Some(std::cmp::Ordering::Equal) => 0.5,
        _ => 0.0,
    });
    let wb = wa.map(|w| 1.0 - w);
    (wa, wb)
}

fn concat(parts: &[&Tensor], axis: usize) -> Tensor {
    if axis == 0 {
        let cols = parts[0].cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            assert_eq!(p.cols(), cols, "row concat needs equal column counts");
            data.extend_from_slice(p.data());
            rows += p.rows();
        }
        Tensor::new(vec![rows, cols], data).expect("concat shape")
    } else {
        let rows = parts[0].rows();
        let cols: usize = parts.iter().map(|p| p.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                assert_eq!(p.rows(), rows, "column concat needs equal row counts");
                data.extend_from_slice(p.row_slice(i));
            }
        }
        Tensor::new(vec![rows, cols], data).expect("concat shape")
    }
}

fn slice_rows(g: &Tensor, start: usize, count: usize) -> Tensor {
    let c = g.cols();
    Tensor::new(vec![count, c], g.data()[start * c..(start + count) * c].to_vec()).expect("slice")
}

fn slice_cols(g: &Tensor, start: usize, count: usize) -> Tensor {
    let mut data = Vec::with_capacity(g.rows() * count);
    for i in 0..g.rows() {
        data.extend_from_slice(&g.row_slice(i)[start..start + count]);
    }
    Tensor::new(vec![g.rows(), count], data).expect("slice")
}

fn gather_rows(src: &Tensor, rows: &[usize]) -> Tensor {
    assert!(!rows.is_empty(), "gather of no rows");
    let c = src.cols();
    let mut data = Vec::with_capacity(rows.len() * c);
    for &r in rows {
        assert!(r < src.rows(), "gather row {r} out of range {}", src.rows());
        data.extend_from_slice(src.row_slice(r));
    }
    Tensor::new(vec![rows.len(), c], data).expect("gather shape")
}

fn scatter_rows(src: &Tensor, rows: &[usize], out_rows: usize) -> Tensor {
    assert_eq!(src.rows(), rows.len(), "scatter needs one target per source row");
    let c = src.cols();
    let mut data = vec![0.0; out_rows * c];
    for (k, &r) in rows.iter().enumerate() {
        assert!(r < out_rows, "scatter row {r} out of range {out_rows}");
        for (o, x) in data[r * c..(r + 1) * c].iter_mut().zip(src.row_slice(k)) {
            *o += x;
        }
    }
    Tensor::new(vec![out_rows, c], data).expect("scatter shape")
}

/// Numerically stable softmax over the unmasked entries of `logits`.
pub fn masked_softmax(logits: &Tensor, mask: &[bool]) -> Result<Tensor> {
    if mask.len() != logits.len() {
        return Err(Error::Shape(format!(
            "mask length {} does not match {} logits",
            mask.len(),
            logits.len()
        )));
    }
    let max = logits
        .data()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptySupport);
    }
    let mut out: Vec<f64> = logits
        .data()
        .iter()
        .zip(mask)
        .map(|(&x, &m)| if m { (x - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    for o in &mut out {
        *o /= z;
    }
    Tensor::new(logits.shape().to_vec(), out)
}
