//! Single-use computation record with reverse-mode differentiation.
//!
//! Every forward op appends a node holding its value; [`Tape::backward`]
//! walks the nodes in reverse insertion order (a valid topological order,
//! since parents always precede children) and returns the gradients of all
//! leaves that require them. The tape is consumed by `backward`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};
use crate::error::{GslError, Result};

/// Row norms below this are replaced by it before normalizing.
pub const NORM_FLOOR: f64 = 1e-12;
/// Inputs to `log` are clamped from below at this value.
pub const LOG_CLAMP: f64 = 1e-12;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tensor {
    tape: u64,
    index: usize,
    rows: usize,
    cols: usize,
}

impl Tensor {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tape_id(&self) -> u64 {
        self.tape
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Hadamard,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryKind {
    Relu,
    Tanh,
    Sigmoid,
    Log,
    Exp,
    Pow(f64),
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulT(usize, usize),
    Binary(BinaryKind, usize, usize),
    Affine { input: usize, scale: f64 },
    Unary(UnaryKind, usize),
    Transpose(usize),
    Sum(usize),
    RowSums(usize),
    ScaleRows(usize, usize),
    RowNormalize { input: usize, norms: Vec<f64> },
    RowSlice { input: usize, row: usize },
    LogSoftmaxRows(usize),
    SoftmaxCrossEntropy { logits: usize, probs: Matrix, labels: Vec<usize>, rows: Vec<usize> },
    BceWithLogits { logits: usize, targets: Matrix, mask: Matrix, count: f64 },
}

struct Node {
    value: Matrix,
    requires_grad: bool,
    op: Op,
}

/// Gradients of the leaves of a consumed tape.
#[derive(Debug, Default)]
pub struct Gradients {
    by_node: HashMap<usize, Matrix>,
    by_param: HashMap<ParamId, Matrix>,
    tape: u64,
}

impl Gradients {
    pub fn get(&self, t: Tensor) -> Option<&Matrix> {
        if t.tape != self.tape {
            return None;
        }
        self.by_node.get(&t.index)
    }

    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        self.by_param.get(&id)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.by_param.iter().map(|(k, v)| (*k, v))
    }
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    bindings: HashMap<ParamId, usize>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            bindings: HashMap::new(),
            consumed: false,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, t: Tensor) -> Result<()> {
        if self.consumed {
            return Err(GslError::TapeConsumed);
        }
        if t.tape != self.id {
            return Err(GslError::ForeignTensor { expected: self.id, found: t.tape });
        }
        Ok(())
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Tensor {
        let (rows, cols) = value.shape();
        self.nodes.push(Node { value, requires_grad, op });
        Tensor { tape: self.id, index: self.nodes.len() - 1, rows, cols }
    }

    fn grad_of(&self, idx: usize) -> bool {
        self.nodes[idx].requires_grad
    }

    pub fn value(&self, t: Tensor) -> &Matrix {
        assert_eq!(t.tape, self.id, "tensor from another tape");
        &self.nodes[t.index].value
    }

    pub fn scalar_value(&self, t: Tensor) -> f64 {
        self.value(t).item()
    }

    /// Records a leaf. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Tensor {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Matrix) -> Tensor {
        self.leaf(value, false)
    }

    /// Binds a parameter as a differentiable leaf. Binding the same parameter
    /// twice returns the same tensor.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Tensor {
        if let Some(&idx) = self.bindings.get(&id) {
            let (rows, cols) = self.nodes[idx].value.shape();
            return Tensor { tape: self.id, index: idx, rows, cols };
        }
        let t = self.leaf(store.value(id).clone(), true);
        self.bindings.insert(id, t.index);
        t
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.check(a)?;
        self.check(b)?;
        if a.cols != b.rows {
            return Err(GslError::config(
                "matmul",
                format!("cannot multiply {}x{} by {}x{}", a.rows, a.cols, b.rows, b.cols),
            ));
        }
        let value = self.nodes[a.index].value.matmul(&self.nodes[b.index].value);
        let rg = self.grad_of(a.index) || self.grad_of(b.index);
        Ok(self.push(value, Op::MatMul(a.index, b.index), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.check(a)?;
        self.check(b)?;
        if a.cols != b.cols {
            return Err(GslError::config(
                "matmul",
                format!("cannot multiply {}x{} by transpose of {}x{}", a.rows, a.cols, b.rows, b.cols),
            ));
        }
        let value = self.nodes[a.index].value.matmul_t(&self.nodes[b.index].value);
        let rg = self.grad_of(a.index) || self.grad_of(b.index);
        Ok(self.push(value, Op::MatMulT(a.index, b.index), rg))
    }

    fn binary(&mut self, kind: BinaryKind, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.check(a)?;
        self.check(b)?;
        let out_shape = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| {
            GslError::config(
                format!("{kind:?}").to_lowercase(),
                format!("shapes {:?} and {:?} are not broadcastable", a.shape(), b.shape()),
            )
        })?;
        let av = &self.nodes[a.index].value;
        let bv = &self.nodes[b.index].value;
        let f = match kind {
            BinaryKind::Add => |x: f64, y: f64| x + y,
            BinaryKind::Sub => |x: f64, y: f64| x - y,
            BinaryKind::Hadamard => |x: f64, y: f64| x * y,
            BinaryKind::Div => |x: f64, y: f64| x / y,
        };
        let value = if av.shape() == bv.shape() {
            av.zip_map(bv, f)
        } else {
            Matrix::from_fn(out_shape.0, out_shape.1, |r, c| f(bget(av, r, c), bget(bv, r, c)))
        };
        let rg = self.grad_of(a.index) || self.grad_of(b.index);
        Ok(self.push(value, Op::Binary(kind, a.index, b.index), rg))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn hadamard(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(BinaryKind::Hadamard, a, b)
    }

    pub fn div(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(BinaryKind::Div, a, b)
    }

    /// `scale · a + shift`.
    pub fn affine(&mut self, a: Tensor, scale: f64, shift: f64) -> Result<Tensor> {
        self.check(a)?;
        let value = self.nodes[a.index].value.map(|v| scale * v + shift);
        let rg = self.grad_of(a.index);
        Ok(self.push(value, Op::Affine { input: a.index, scale }, rg))
    }

    pub fn scale(&mut self, a: Tensor, s: f64) -> Result<Tensor> {
        self.affine(a, s, 0.0)
    }

    pub fn add_scalar(&mut self, a: Tensor, s: f64) -> Result<Tensor> {
        self.affine(a, 1.0, s)
    }

    pub fn unary(&mut self, kind: UnaryKind, a: Tensor) -> Result<Tensor> {
        self.check(a)?;
        let x = &self.nodes[a.index].value;
        let value = match kind {
            UnaryKind::Relu => x.map(|v| v.max(0.0)),
            UnaryKind::Tanh => x.map(f64::tanh),
            UnaryKind::Sigmoid => x.map(sigmoid),
            UnaryKind::Log => x.map(|v| v.max(LOG_CLAMP).ln()),
            // Clamped so exp never overflows to infinity.
            UnaryKind::Exp => x.map(|v| v.min(700.0).exp()),
            UnaryKind::Pow(p) => x.map(|v| v.powf(p)),
        };
        let rg = self.grad_of(a.index);
        Ok(self.push(value, Op::Unary(kind, a.index), rg))
    }

    pub fn relu(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn tanh(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(UnaryKind::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(UnaryKind::Sigmoid, a)
    }

    pub fn log(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(UnaryKind::Log, a)
    }

    pub fn exp(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(UnaryKind::Exp, a)
    }

    pub fn powf(&mut self, a: Tensor, p: f64) -> Result<Tensor> {
        self.unary(UnaryKind::Pow(p), a)
    }

    pub fn square(&mut self, a: Tensor) -> Result<Tensor> {
        self.hadamard(a, a)
    }

    pub fn transpose(&mut self, a: Tensor) -> Result<Tensor> {
        self.check(a)?;
        let value = self.nodes[a.index].value.transpose();
        let rg = self.grad_of(a.index);
        Ok(self.push(value, Op::Transpose(a.index), rg))
    }

    /// Sum of all entries as a 1×1 tensor.
    pub fn sum(&mut self, a: Tensor) -> Result<Tensor> {
        self.check(a)?;
        let value = Matrix::scalar(self.nodes[a.index].value.sum());
        let rg = self.grad_of(a.index);
        Ok(self.push(value, Op::Sum(a.index), rg))
    }

    pub fn mean(&mut self, a: Tensor) -> Result<Tensor> {
        let n = (a.rows * a.cols).max(1) as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// `A·1` as an n×1 column.
    pub fn row_sums(&mut self, a: Tensor) -> Result<Tensor> {
        self.check(a)?;
        let value = self.nodes[a.index].value.row_sums();
        let rg = self.grad_of(a.index);
        Ok(self.push(value, Op::RowSums(a.index), rg))
    }

    /// Multiplies row `i` of `a` by `v[i]`, where `v` is an n×1 column.
    pub fn scale_rows(&mut self, a: Tensor, v: Tensor) -> Result<Tensor> {
        self.check(a)?;
        self.check(v)?;
        if v.cols != 1 || v.rows != a.rows {
            return Err(GslError::config(
                "scale_rows",
                format!("row scale {:?} does not match {:?}", v.shape(), a.shape()),
            ));
        }
        let av = &self.nodes[a.index].value;
        let vv = &self.nodes[v.index].value;
        let value = Matrix::from_fn(a.rows, a.cols, |r, c| av[(r, c)] * vv[(r, 0)]);
        let rg = self.grad_of(a.index) || self.grad_of(v.index);
        Ok(self.push(value, Op::ScaleRows(a.index, v.index), rg))
    }

    /// Divides each row by its Euclidean norm, floored at [`NORM_FLOOR`].
    pub fn row_normalize(&mut self, a: Tensor) -> Result<Tensor> {
        self.check(a)?;
        let x = &self.nodes[a.index].value;
        let norms: Vec<f64> = (0..x.rows())
            .map(|r| x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR))
            .collect();
        let value = Matrix::from_fn(x.rows(), x.cols(), |r, c| x[(r, c)] / norms[r]);
        let rg = self.grad_of(a.index);
        Ok(self.push(value, Op::RowNormalize { input: a.index, norms }, rg))
    }

    /// All-pairs cosine similarity of the rows of `x`.
    pub fn pairwise_cosine(&mut self, x: Tensor) -> Result<Tensor> {
        let unit = self.row_normalize(x)?;
        self.matmul_t(unit, unit)
    }

    /// Cosine similarity between every row of `x` and every row of `y`.
    pub fn cross_cosine(&mut self, x: Tensor, y: Tensor) -> Result<Tensor> {
        let ux = self.row_normalize(x)?;
        let uy = self.row_normalize(y)?;
        self.matmul_t(ux, uy)
    }

    /// Row `row` of `a` as a 1×cols tensor.
    pub fn row_slice(&mut self, a: Tensor, row: usize) -> Result<Tensor> {
        self.check(a)?;
        if row >= a.rows {
            return Err(GslError::config("row_slice", format!("row {row} out of {}", a.rows)));
        }
        let value = Matrix::from_vec(1, a.cols, self.nodes[a.index].value.row(row).to_vec())?;
        let rg = self.grad_of(a.index);
        Ok(self.push(value, Op::RowSlice { input: a.index, row }, rg))
    }

    /// Row-wise log-softmax, stabilized by subtracting each row's maximum.
    pub fn log_softmax_rows(&mut self, a: Tensor) -> Result<Tensor> {
        self.check(a)?;
        let x = &self.nodes[a.index].value;
        let mut value = x.clone();
        for r in 0..x.rows() {
            let row = value.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let rg = self.grad_of(a.index);
        Ok(self.push(value, Op::LogSoftmaxRows(a.index), rg))
    }

    /// Mean over the rows selected by `mask` of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Tensor,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<Tensor> {
        self.check(logits)?;
        let x = &self.nodes[logits.index].value;
        if labels.len() != x.rows() || mask.len() != x.rows() {
            return Err(GslError::config(
                "softmax_cross_entropy",
                format!(
                    "{} logits rows, {} labels, {} mask entries",
                    x.rows(),
                    labels.len(),
                    mask.len()
                ),
            ));
        }
        let rows: Vec<usize> = (0..x.rows()).filter(|&r| mask[r]).collect();
        if rows.is_empty() {
            return Err(GslError::config("mask", "cross-entropy mask selects no nodes"));
        }
        let mut probs = Matrix::zeros(x.rows(), x.cols());
        let mut total = 0.0;
        for &r in &rows {
            let label = labels[r];
            if label >= x.cols() {
                return Err(GslError::config(
                    "labels",
                    format!("label {label} at node {r} is not below {} classes", x.cols()),
                ));
            }
            let row = x.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
            for (c, v) in row.iter().enumerate() {
                probs[(r, c)] = (v - max).exp() / denom;
            }
            total += -(row[label] - max - denom.ln());
        }
        let value = Matrix::scalar(total / rows.len() as f64);
        let rg = self.grad_of(logits.index);
        let op = Op::SoftmaxCrossEntropy { logits: logits.index, probs, labels: labels.to_vec(), rows };
        Ok(self.push(value, op, rg))
    }

    /// Mean binary cross-entropy with logits over entries where `mask` is nonzero.
    pub fn bce_with_logits(&mut self, logits: Tensor, targets: &Matrix, mask: &Matrix) -> Result<Tensor> {
        self.check(logits)?;
        let z = &self.nodes[logits.index].value;
        if z.shape() != targets.shape() || z.shape() != mask.shape() {
            return Err(GslError::config(
                "bce_with_logits",
                format!("logits {:?}, targets {:?}, mask {:?}", z.shape(), targets.shape(), mask.shape()),
            ));
        }
        let count = mask.count_nonzero() as f64;
        if count == 0.0 {
            return Err(GslError::config("mask", "binary cross-entropy mask selects no entries"));
        }
        let mut total = 0.0;
        for ((&zv, &t), &m) in z.as_slice().iter().zip(targets.as_slice()).zip(mask.as_slice()) {
            if m != 0.0 {
                // softplus(z) - t z, computed stably
                total += zv.max(0.0) + (-zv.abs()).exp().ln_1p() - t * zv;
            }
        }
        let value = Matrix::scalar(total / count);
        let rg = self.grad_of(logits.index);
        let op = Op::BceWithLogits { logits: logits.index, targets: targets.clone(), mask: mask.clone(), count };
        Ok(self.push(value, op, rg))
    }

    /// Reverse-mode pass from a finite scalar `loss`. Consumes the tape.
    pub fn backward(&mut self, loss: Tensor) -> Result<Gradients> {
        self.check(loss)?;
        if !loss.is_scalar() {
            return Err(GslError::config(
                "loss",
                format!("backward needs a scalar loss, got {:?}", loss.shape()),
            ));
        }
        let lv = self.nodes[loss.index].value.item();
        if !lv.is_finite() {
            return Err(GslError::Numeric(format!("loss is not finite ({lv})")));
        }
        let mut grads: Vec<Option<Matrix>> = (0..=loss.index).map(|_| None).collect();
        grads[loss.index] = Some(Matrix::scalar(1.0));
        let mut out = Gradients { tape: self.id, ..Default::default() };

        for idx in (0..=loss.index).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[idx].op {
                out.by_node.insert(idx, g);
                continue;
            }
            for (parent, pg) in self.local_grads(idx, &g) {
                if !self.nodes[parent].requires_grad {
                    continue;
                }
                match &mut grads[parent] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }

        for (&pid, &idx) in &self.bindings {
            if let Some(g) = out.by_node.get(&idx) {
                out.by_param.insert(pid, g.clone());
            }
        }
        self.nodes.clear();
        self.bindings.clear();
        self.consumed = true;
        Ok(out)
    }

    /// Gradient contributions of node `idx` to its parents given upstream `g`.
    fn local_grads(&self, idx: usize, g: &Matrix) -> Vec<(usize, Matrix)> {
        let node = &self.nodes[idx];
        let val = |i: usize| &self.nodes[i].value;
        let needs = |i: usize| self.nodes[i].requires_grad;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let mut v = Vec::with_capacity(2);
                if needs(*a) {
                    v.push((*a, g.matmul_t(val(*b))));
                }
                if needs(*b) {
                    v.push((*b, val(*a).t_matmul(g)));
                }
                v
            }
            Op::MatMulT(a, b) => {
                let mut v = Vec::with_capacity(2);
                if needs(*a) {
                    v.push((*a, g.matmul(val(*b))));
                }
                if needs(*b) {
                    v.push((*b, g.t_matmul(val(*a))));
                }
                v
            }
            Op::Binary(kind, a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (rows, cols) = g.shape();
                let mut v = Vec::with_capacity(2);
                if needs(*a) {
                    let full = match kind {
                        BinaryKind::Add | BinaryKind::Sub => g.clone(),
                        BinaryKind::Hadamard => Matrix::from_fn(rows, cols, |r, c| g[(r, c)] * bget(bv, r, c)),
                        BinaryKind::Div => Matrix::from_fn(rows, cols, |r, c| g[(r, c)] / bget(bv, r, c)),
                    };
                    v.push((*a, reduce_to(full, av.shape())));
                }
                if needs(*b) {
                    let full = match kind {
                        BinaryKind::Add => g.clone(),
                        BinaryKind::Sub => g.scale(-1.0),
                        BinaryKind::Hadamard => Matrix::from_fn(rows, cols, |r, c| g[(r, c)] * bget(av, r, c)),
                        BinaryKind::Div => Matrix::from_fn(rows, cols, |r, c| {
                            let y = bget(bv, r, c);
                            -g[(r, c)] * bget(av, r, c) / (y * y)
                        }),
                    };
                    v.push((*b, reduce_to(full, bv.shape())));
                }
                v
            }
            Op::Affine { input, scale } => vec![(*input, g.scale(*scale))],
            Op::Unary(kind, input) => {
                let x = val(*input);
                let y = &node.value;
                let d = match kind {
                    UnaryKind::Relu => x.zip_map(g, |xv, gv| if xv > 0.0 { gv } else { 0.0 }),
                    UnaryKind::Tanh => y.zip_map(g, |yv, gv| gv * (1.0 - yv * yv)),
                    UnaryKind::Sigmoid => y.zip_map(g, |yv, gv| gv * yv * (1.0 - yv)),
                    UnaryKind::Log => x.zip_map(g, |xv, gv| if xv >= LOG_CLAMP { gv / xv } else { 0.0 }),
                    UnaryKind::Exp => {
                        Matrix::from_fn(x.rows(), x.cols(), |r, c| {
                            if x[(r, c)] < 700.0 { g[(r, c)] * y[(r, c)] } else { 0.0 }
                        })
                    }
                    UnaryKind::Pow(p) => x.zip_map(g, |xv, gv| gv * p * xv.powf(p - 1.0)),
                };
                vec![(*input, d)]
            }
            Op::Transpose(input) => vec![(*input, g.transpose())],
            Op::Sum(input) => {
                let (r, c) = val(*input).shape();
                vec![(*input, Matrix::filled(r, c, g.item()))]
            }
            Op::RowSums(input) => {
                let (r, c) = val(*input).shape();
                vec![(*input, Matrix::from_fn(r, c, |i, _| g[(i, 0)]))]
            }
            Op::ScaleRows(a, s) => {
                let (av, sv) = (val(*a), val(*s));
                let mut v = Vec::with_capacity(2);
                if needs(*a) {
                    v.push((*a, Matrix::from_fn(av.rows(), av.cols(), |r, c| g[(r, c)] * sv[(r, 0)])));
                }
                if needs(*s) {
                    let col = Matrix::from_fn(sv.rows(), 1, |r, _| {
                        g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum()
                    });
                    v.push((*s, col));
                }
                v
            }
            Op::RowNormalize { input, norms } => {
                // y = x / n  =>  dx = (g - y (g·y)) / n
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    let n = norms[r];
                    let raw_norm: f64 = val(*input).row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                    let floored = raw_norm < NORM_FLOOR;
                    for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                        *dv = if floored { gr[c] / n } else { (gr[c] - yr[c] * dot) / n };
                    }
                }
                vec![(*input, d)]
            }
            Op::RowSlice { input, row } => {
                let (r, c) = val(*input).shape();
                let mut d = Matrix::zeros(r, c);
                d.row_mut(*row).copy_from_slice(g.as_slice());
                vec![(*input, d)]
            }
            Op::LogSoftmaxRows(input) => {
                // dx = g - softmax * rowsum(g)
                let y = &node.value;
                let mut d = g.clone();
                for r in 0..y.rows() {
                    let gs: f64 = g.row(r).iter().sum();
                    for (dv, yv) in d.row_mut(r).iter_mut().zip(y.row(r)) {
                        *dv -= yv.exp() * gs;
                    }
                }
                vec![(*input, d)]
            }
            Op::SoftmaxCrossEntropy { logits, probs, labels, rows } => {
                let scale = g.item() / rows.len() as f64;
                let mut d = Matrix::zeros(probs.rows(), probs.cols());
                for &r in rows {
                    for c in 0..probs.cols() {
                        let target = if c == labels[r] { 1.0 } else { 0.0 };
                        d[(r, c)] = scale * (probs[(r, c)] - target);
                    }
                }
                vec![(*logits, d)]
            }
            Op::BceWithLogits { logits, targets, mask, count } => {
                let z = val(*logits);
                let scale = g.item() / count;
                let d = Matrix::from_fn(z.rows(), z.cols(), |r, c| {
                    if mask[(r, c)] != 0.0 {
                        scale * (sigmoid(z[(r, c)]) - targets[(r, c)])
                    } else {
                        0.0
                    }
                });
                vec![(*logits, d)]
            }
        }
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    if a == b {
        return Some(a);
    }
    if a == (1, 1) {
        return Some(b);
    }
    if b == (1, 1) {
        return Some(a);
    }
    if a.0 == 1 && a.1 == b.1 {
        return Some(b);
    }
    if b.0 == 1 && b.1 == a.1 {
        return Some(a);
    }
    None
}

/// Reads `m` at `(r, c)` of the broadcast output shape.
#[inline]
fn bget(m: &Matrix, r: usize, c: usize) -> f64 {
    let rr = if m.rows() == 1 { 0 } else { r };
    let cc = if m.cols() == 1 { 0 } else { c };
    m[(rr, cc)]
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(full: Matrix, shape: (usize, usize)) -> Matrix {
    if full.shape() == shape {
        return full;
    }
    match shape {
        (1, 1) => Matrix::scalar(full.sum()),
        (1, _) => full.col_sums(),
        _ => unreachable!("only scalar and row broadcasts are recorded"),
    }
}
