//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation applied to [`Value`] handles; calling
//! [`Tape::backward`] on a scalar loss walks the record once in reverse and
//! accumulates gradients. Leaf gradients stay queryable after the sweep
//! (parameters via [`Tape::apply_grads`], inputs via [`Tape::grad`]);
//! intermediate gradients are dropped as soon as their consumers are done so
//! full-graph passes don't hold every temporary alive.
//!
//! The op set is exactly what the energy model, the refinement head, and the
//! classifier need: dense matmul, elementwise maps, reductions, masked
//! log-sum-exp, pairwise squared distances, cosine similarity, gather /
//! concat / pooling plumbing, a relaxed-Bernoulli reparameterization, and
//! self-loop symmetric normalization. Every forward checks shapes and rejects
//! non-finite outputs instead of letting NaNs propagate.

mod check;
mod store;

pub use check::{check_gradients, check_input_gradients, GradCheckReport};
pub use store::ParamStore;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::matrix::Matrix;

/// Handle to a node on a [`Tape`]. Only valid for the tape that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Value(usize);

#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {details}")]
    Shape { op: &'static str, details: String },
    #[error("non-finite values produced by {op}")]
    NonFinite { op: &'static str },
    #[error("expected a 1x1 scalar, got {rows}x{cols}")]
    NonScalar { rows: usize, cols: usize },
    #[error("backward already run on this tape")]
    BackwardTwice,
    #[error("mask row {row} has no active entries")]
    EmptyMaskRow { row: usize },
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("duplicate parameter '{0}'")]
    DuplicateParam(String),
    #[error("gradient shape mismatch for parameter '{0}'")]
    GradShape(String),
    #[error("adam_step called before any gradient was accumulated")]
    MissingGradients,
}

enum Op {
    Leaf,
    MatMul(Value, Value),
    Add(Value, Value),
    AddRowBroadcast(Value, Value),
    Sub(Value, Value),
    MulElem(Value, Value),
    Scale(Value, f64),
    AddScalar(Value),
    Neg(Value),
    Relu(Value),
    Exp(Value),
    Log(Value),
    Square(Value),
    Rsqrt(Value),
    Sigmoid(Value),
    Clamp(Value, f64, f64),
    ConcatRows(Vec<Value>),
    Sum(Value),
    Mean(Value),
    SumRows(Value),
    LogSumExp(Value),
    MaskedRowLogSumExp { x: Value, mask: Matrix },
    SoftmaxRows(Value),
    L2NormalizeRows(Value),
    PairwiseSqDist(Value, Value),
    CosineSim(Value, Value),
    GatherRows { x: Value, indices: Vec<usize> },
    MeanPoolRows(Value),
    ZeroDiag(Value),
    RelaxedBernoulli { p: Value, temperature: f64, lo: f64, hi: f64 },
    SymNormalize(Value),
}

struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
    /// Parameter name when this leaf was bound from a [`ParamStore`].
    param: Option<String>,
}

/// Operation record for one forward pass.
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), backward_done: false }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool, name: &'static str) -> Result<Value, DiffError> {
        if !value.all_finite() {
            return Err(DiffError::NonFinite { op: name });
        }
        self.nodes.push(Node { value, grad: None, requires_grad, op, param: None });
        Ok(Value(self.nodes.len() - 1))
    }

    /// Record a matrix that gradients never flow into.
    pub fn constant(&mut self, value: Matrix) -> Result<Value, DiffError> {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// Record a differentiable input (e.g. an SGLD particle).
    pub fn input(&mut self, value: Matrix) -> Result<Value, DiffError> {
        self.push(value, Op::Leaf, true, "input")
    }

    /// Bind a named parameter from `store` as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Value, DiffError> {
        let value = store
            .get(name)
            .ok_or_else(|| DiffError::UnknownParam(String::from(name)))?
            .clone();
        let v = self.push(value, Op::Leaf, true, "param")?;
        self.nodes[v.0].param = Some(String::from(name));
        Ok(v)
    }

    pub fn value(&self, v: Value) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Extract a 1x1 node as `f64`.
    pub fn scalar(&self, v: Value) -> Result<f64, DiffError> {
        let m = self.value(v);
        if m.shape() != (1, 1) {
            return Err(DiffError::NonScalar { rows: m.rows(), cols: m.cols() });
        }
        Ok(m.get(0, 0))
    }

    /// Gradient of the last backward pass w.r.t. a leaf, if any flowed there.
    pub fn grad(&self, v: Value) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    fn shape_err(op: &'static str, details: String) -> DiffError {
        DiffError::Shape { op, details }
    }

    fn binary_same_shape(&self, op: &'static str, a: Value, b: Value) -> Result<(usize, usize), DiffError> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa != sb {
            return Err(Self::shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    fn requires(&self, vs: &[Value]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ----- op constructors -------------------------------------------------

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value, DiffError> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.cols() != bm.rows() {
            return Err(Self::shape_err("matmul", format!("{:?} * {:?}", am.shape(), bm.shape())));
        }
        let out = am.matmul(bm);
        let rg = self.requires(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value, DiffError> {
        self.binary_same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.requires(&[a, b]);
        self.push(out, Op::Add(a, b), rg, "add")
    }

    /// `a + b` where `b` is `1 x C` and broadcast over the rows of `a`.
    pub fn add_row_broadcast(&mut self, a: Value, b: Value) -> Result<Value, DiffError> {
        let (am, bm) = (self.value(a), self.value(b));
        if bm.rows() != 1 || bm.cols() != am.cols() {
            return Err(Self::shape_err("add_row_broadcast", format!("{:?} + {:?}", am.shape(), bm.shape())));
        }
        let mut out = am.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (x, &y) in row.iter_mut().zip(bm.row(0)) {
                *x += y;
            }
        }
        let rg = self.requires(&[a, b]);
        self.push(out, Op::AddRowBroadcast(a, b), rg, "add_row_broadcast")
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value, DiffError> {
        self.binary_same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.requires(&[a, b]);
        self.push(out, Op::Sub(a, b), rg, "sub")
    }

    pub fn mul_elem(&mut self, a: Value, b: Value) -> Result<Value, DiffError> {
        self.binary_same_shape("mul_elem", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.requires(&[a, b]);
        self.push(out, Op::MulElem(a, b), rg, "mul_elem")
    }

    pub fn scale(&mut self, a: Value, s: f64) -> Result<Value, DiffError> {
        let out = self.value(a).map(|x| s * x);
        let rg = self.requires(&[a]);
        self.push(out, Op::Scale(a, s), rg, "scale")
    }

    pub fn add_scalar(&mut self, a: Value, s: f64) -> Result<Value, DiffError> {
        let out = self.value(a).map(|x| x + s);
        let rg = self.requires(&[a]);
        self.push(out, Op::AddScalar(a), rg, "add_scalar")
    }

    pub fn neg(&mut self, a: Value) -> Result<Value, DiffError> {
        let out = self.value(a).map(|x| -x);
        let rg = self.requires(&[a]);
        self.push(out, Op::Neg(a), rg, "neg")
    }

    pub fn relu(&mut self, a: Value) -> Result<Value, DiffError> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.requires(&[a]);
        self.push(out, Op::Relu(a), rg, "relu")
    }

    pub fn exp(&mut self, a: Value) -> Result<Value, DiffError> {
        let out = self.value(a).map(math::exp);
        let rg = self.requires(&[a]);
        self.push(out, Op::Exp(a), rg, "exp")
    }

    /// Natural log; non-positive inputs surface as a non-finite error.
    pub fn log(&mut self, a: Value) -> Result<Value, DiffError> {
        let out = self.value(a).map(math::log);
        let rg = self.requires(&[a]);
        self.push(out, Op::Log(a), rg, "log")
    }

    pub fn square(&mut self, a: Value) -> Result<Value, DiffError> {
        let out = self.value(a).map(|x| x * x);
        let rg = self.requires(&[a]);
        self.push(out, Op::Square(a), rg, "square")
    }

    /// `x^{-1/2}`; non-positive inputs surface as a non-finite error.
    pub fn rsqrt(&mut self, a: Value) -> Result<Value, DiffError> {
        let out = self.value(a).map(|x| 1.0 / math::sqrt(x));
        let rg = self.requires(&[a]);
        self.push(out, Op::Rsqrt(a), rg, "rsqrt")
    }

    pub fn sigmoid(&mut self, a: Value) -> Result<Value, DiffError> {
        let out = self.value(a).map(math::sigmoid);
        let rg = self.requires(&[a]);
        self.push(out, Op::Sigmoid(a), rg, "sigmoid")
    }

    /// Clamp to `[lo, hi]`; gradient passes only where `lo <= x <= hi`.
    pub fn clamp(&mut self, a: Value, lo: f64, hi: f64) -> Result<Value, DiffError> {
        let out = self.value(a).map(|x| x.max(lo).min(hi));
        let rg = self.requires(&[a]);
        self.push(out, Op::Clamp(a, lo, hi), rg, "clamp")
    }

    /// Stack matrices with identical column counts, top to bottom.
    pub fn concat_rows(&mut self, parts: &[Value]) -> Result<Value, DiffError> {
        if parts.is_empty() {
            return Err(Self::shape_err("concat_rows", String::from("no inputs")));
        }
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            if m.cols() != cols {
                return Err(Self::shape_err("concat_rows", format!("{} cols vs {}", m.cols(), cols)));
            }
            rows += m.rows();
            data.extend_from_slice(m.data());
        }
        let out = Matrix::from_vec(rows, cols, data);
        let rg = self.requires(parts);
        self.push(out, Op::ConcatRows(parts.to_vec()), rg, "concat_rows")
    }

    pub fn sum(&mut self, a: Value) -> Result<Value, DiffError> {
        let total: f64 = self.value(a).data().iter().sum();
        let rg = self.requires(&[a]);
        self.push(Matrix::filled(1, 1, total), Op::Sum(a), rg, "sum")
    }

    pub fn mean(&mut self, a: Value) -> Result<Value, DiffError> {
        let m = self.value(a);
        if m.is_empty() {
            return Err(Self::shape_err("mean", String::from("empty input")));
        }
        let total: f64 = m.data().iter().sum();
        let out = Matrix::filled(1, 1, total / m.len() as f64);
        let rg = self.requires(&[a]);
        self.push(out, Op::Mean(a), rg, "mean")
    }

    /// Row sums: `R x C -> R x 1`.
    pub fn sum_rows(&mut self, a: Value) -> Result<Value, DiffError> {
        let m = self.value(a);
        let out = Matrix::from_fn(m.rows(), 1, |i, _| m.row(i).iter().sum());
        let rg = self.requires(&[a]);
        self.push(out, Op::SumRows(a), rg, "sum_rows")
    }

    /// Max-shifted `log(sum(exp(x)))` over all entries, producing `1 x 1`.
    pub fn logsumexp(&mut self, a: Value) -> Result<Value, DiffError> {
        let m = self.value(a);
        if m.is_empty() {
            return Err(Self::shape_err("logsumexp", String::from("empty input")));
        }
        let max = m.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = m.data().iter().map(|&x| math::exp(x - max)).sum();
        let out = Matrix::filled(1, 1, max + math::log(sum));
        let rg = self.requires(&[a]);
        self.push(out, Op::LogSumExp(a), rg, "logsumexp")
    }

    /// Per-row max-shifted log-sum-exp restricted to entries where
    /// `mask != 0`. Every row must have at least one active entry.
    pub fn masked_row_logsumexp(&mut self, a: Value, mask: &Matrix) -> Result<Value, DiffError> {
        let m = self.value(a);
        if m.shape() != mask.shape() {
            return Err(Self::shape_err("masked_row_logsumexp", format!("{:?} vs mask {:?}", m.shape(), mask.shape())));
        }
        let mut out = Matrix::zeros(m.rows(), 1);
        for i in 0..m.rows() {
            let mut max = f64::NEG_INFINITY;
            for (j, &x) in m.row(i).iter().enumerate() {
                if mask.get(i, j) != 0.0 && x > max {
                    max = x;
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(DiffError::EmptyMaskRow { row: i });
            }
            let mut sum = 0.0;
            for (j, &x) in m.row(i).iter().enumerate() {
                if mask.get(i, j) != 0.0 {
                    sum += math::exp(x - max);
                }
            }
            out.set(i, 0, max + math::log(sum));
        }
        let rg = self.requires(&[a]);
        self.push(out, Op::MaskedRowLogSumExp { x: a, mask: mask.clone() }, rg, "masked_row_logsumexp")
    }

    pub fn softmax_rows(&mut self, a: Value) -> Result<Value, DiffError> {
        let m = self.value(a);
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for i in 0..m.rows() {
            let row = m.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = math::exp(x - max);
                out.set(i, j, e);
                sum += e;
            }
            for j in 0..m.cols() {
                out.set(i, j, out.get(i, j) / sum);
            }
        }
        let rg = self.requires(&[a]);
        self.push(out, Op::SoftmaxRows(a), rg, "softmax_rows")
    }

    /// Scale each row to unit L2 norm; zero rows stay zero (with zero
    /// gradient, by convention).
    pub fn l2_normalize_rows(&mut self, a: Value) -> Result<Value, DiffError> {
        let m = self.value(a);
        let mut out = m.clone();
        for i in 0..out.rows() {
            let norm = math::sqrt(m.row(i).iter().map(|&x| x * x).sum());
            if norm > 0.0 {
                for x in out.row_mut(i) {
                    *x /= norm;
                }
            }
        }
        let rg = self.requires(&[a]);
        self.push(out, Op::L2NormalizeRows(a), rg, "l2_normalize_rows")
    }

    /// All pairwise squared Euclidean distances between rows of `a` and rows
    /// of `b`: output `(i, j) = ||a_i - b_j||^2`.
    pub fn pairwise_sqdist(&mut self, a: Value, b: Value) -> Result<Value, DiffError> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.cols() != bm.cols() {
            return Err(Self::shape_err("pairwise_sqdist", format!("{:?} vs {:?}", am.shape(), bm.shape())));
        }
        let mut out = Matrix::zeros(am.rows(), bm.rows());
        for i in 0..am.rows() {
            let ra = am.row(i);
            for j in 0..bm.rows() {
                let rb = bm.row(j);
                let mut d = 0.0;
                for (x, y) in ra.iter().zip(rb) {
                    let t = x - y;
                    d += t * t;
                }
                out.set(i, j, d);
            }
        }
        let rg = self.requires(&[a, b]);
        self.push(out, Op::PairwiseSqDist(a, b), rg, "pairwise_sqdist")
    }

    /// Cosine similarity between rows of `a` and rows of `b`; pairs involving
    /// a zero-norm row get value 0 and zero gradient.
    pub fn cosine_sim(&mut self, a: Value, b: Value) -> Result<Value, DiffError> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.cols() != bm.cols() {
            return Err(Self::shape_err("cosine_sim", format!("{:?} vs {:?}", am.shape(), bm.shape())));
        }
        let na: Vec<f64> = (0..am.rows())
            .map(|i| math::sqrt(am.row(i).iter().map(|&x| x * x).sum()))
            .collect();
        let nb: Vec<f64> = (0..bm.rows())
            .map(|j| math::sqrt(bm.row(j).iter().map(|&x| x * x).sum()))
            .collect();
        let mut out = am.matmul_a_bt(bm);
        for i in 0..out.rows() {
            for j in 0..out.cols() {
                let d = na[i] * nb[j];
                let v = if d > 0.0 { out.get(i, j) / d } else { 0.0 };
                out.set(i, j, v);
            }
        }
        let rg = self.requires(&[a, b]);
        self.push(out, Op::CosineSim(a, b), rg, "cosine_sim")
    }

    /// Select rows by index (repeats allowed); backward scatter-adds.
    pub fn gather_rows(&mut self, a: Value, indices: &[usize]) -> Result<Value, DiffError> {
        let m = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= m.rows()) {
            return Err(Self::shape_err("gather_rows", format!("index {bad} out of {} rows", m.rows())));
        }
        let mut out = Matrix::zeros(indices.len(), m.cols());
        for (k, &i) in indices.iter().enumerate() {
            out.row_mut(k).copy_from_slice(m.row(i));
        }
        let rg = self.requires(&[a]);
        self.push(out, Op::GatherRows { x: a, indices: indices.to_vec() }, rg, "gather_rows")
    }

    /// Column-wise mean over rows: `R x C -> 1 x C`.
    pub fn mean_pool_rows(&mut self, a: Value) -> Result<Value, DiffError> {
        let m = self.value(a);
        if m.rows() == 0 {
            return Err(Self::shape_err("mean_pool_rows", String::from("no rows")));
        }
        let mut out = Matrix::zeros(1, m.cols());
        for i in 0..m.rows() {
            for (j, &x) in m.row(i).iter().enumerate() {
                out.set(0, j, out.get(0, j) + x);
            }
        }
        let inv = 1.0 / m.rows() as f64;
        for x in out.row_mut(0) {
            *x *= inv;
        }
        let rg = self.requires(&[a]);
        self.push(out, Op::MeanPoolRows(a), rg, "mean_pool_rows")
    }

    /// Zero the main diagonal of a square matrix.
    pub fn zero_diag(&mut self, a: Value) -> Result<Value, DiffError> {
        let m = self.value(a);
        if m.rows() != m.cols() {
            return Err(Self::shape_err("zero_diag", format!("{:?} not square", m.shape())));
        }
        let mut out = m.clone();
        for i in 0..out.rows() {
            out.set(i, i, 0.0);
        }
        let rg = self.requires(&[a]);
        self.push(out, Op::ZeroDiag(a), rg, "zero_diag")
    }

    /// Differentiable relaxed-Bernoulli sample of a square probability matrix:
    /// `sigmoid((logit(clamp(p, lo, hi)) + noise) / temperature)` off the
    /// diagonal, 0 on it. `noise` holds pre-drawn logistic variates.
    pub fn relaxed_bernoulli(
        &mut self,
        p: Value,
        noise: &Matrix,
        temperature: f64,
        lo: f64,
        hi: f64,
    ) -> Result<Value, DiffError> {
        let pm = self.value(p);
        if pm.rows() != pm.cols() {
            return Err(Self::shape_err("relaxed_bernoulli", format!("{:?} not square", pm.shape())));
        }
        if pm.shape() != noise.shape() {
            return Err(Self::shape_err("relaxed_bernoulli", format!("noise {:?} vs p {:?}", noise.shape(), pm.shape())));
        }
        if !(temperature > 0.0) {
            return Err(Self::shape_err("relaxed_bernoulli", format!("temperature {temperature} must be positive")));
        }
        let mut out = Matrix::zeros(pm.rows(), pm.cols());
        for i in 0..pm.rows() {
            for j in 0..pm.cols() {
                if i == j {
                    continue;
                }
                let v = math::relaxed_bernoulli_scalar(pm.get(i, j), noise.get(i, j), temperature, lo, hi);
                out.set(i, j, v);
            }
        }
        let rg = self.requires(&[p]);
        self.push(out, Op::RelaxedBernoulli { p, temperature, lo, hi }, rg, "relaxed_bernoulli")
    }

    /// Self-loop symmetric normalization of a square nonnegative matrix:
    /// `D^{-1/2} (W + I) D^{-1/2}` with `D = diag(rowsum(W + I))`.
    pub fn sym_normalize(&mut self, w: Value) -> Result<Value, DiffError> {
        let wm = self.value(w);
        if wm.rows() != wm.cols() {
            return Err(Self::shape_err("sym_normalize", format!("{:?} not square", wm.shape())));
        }
        let n = wm.rows();
        let mut deg = vec![0.0; n];
        for i in 0..n {
            deg[i] = wm.row(i).iter().sum::<f64>() + 1.0;
        }
        if deg.iter().any(|&d| d <= 0.0) {
            return Err(DiffError::NonFinite { op: "sym_normalize" });
        }
        let s: Vec<f64> = deg.iter().map(|&d| 1.0 / math::sqrt(d)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let hat = wm.get(i, j) + if i == j { 1.0 } else { 0.0 };
                out.set(i, j, s[i] * hat * s[j]);
            }
        }
        let rg = self.requires(&[w]);
        self.push(out, Op::SymNormalize(w), rg, "sym_normalize")
    }

    // ----- backward --------------------------------------------------------

    /// Reverse sweep from a scalar loss. May be called once per tape.
    pub fn backward(&mut self, loss: Value) -> Result<(), DiffError> {
        if self.backward_done {
            return Err(DiffError::BackwardTwice);
        }
        self.backward_done = true;
        let lm = self.value(loss);
        if lm.shape() != (1, 1) {
            return Err(DiffError::NonScalar { rows: lm.rows(), cols: lm.cols() });
        }
        self.nodes[loss.0].grad = Some(Matrix::filled(1, 1, 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            let contributions = self.op_backward(i, &g)?;
            for (parent, contribution) in contributions {
                let node = &mut self.nodes[parent];
                if !node.requires_grad {
                    continue;
                }
                match &mut node.grad {
                    Some(acc) => acc.add_assign_scaled(&contribution, 1.0),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Ok(())
    }

    /// Add the gradients of all bound parameters into `store`.
    pub fn apply_grads(&self, store: &mut ParamStore) -> Result<(), DiffError> {
        for node in &self.nodes {
            if let (Some(name), Some(grad)) = (&node.param, &node.grad) {
                store.accumulate_grad(name, grad)?;
            }
        }
        Ok(())
    }

    fn op_backward(&self, idx: usize, g: &Matrix) -> Result<Vec<(usize, Matrix)>, DiffError> {
        let out_value = &self.nodes[idx].value;
        let mut contribs: Vec<(usize, Matrix)> = Vec::with_capacity(2);
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (am, bm) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].requires_grad {
                    contribs.push((a.0, g.matmul_a_bt(bm)));
                }
                if self.nodes[b.0].requires_grad {
                    contribs.push((b.0, am.matmul_at_b(g)));
                }
            }
            Op::Add(a, b) => {
                contribs.push((a.0, g.clone()));
                contribs.push((b.0, g.clone()));
            }
            Op::AddRowBroadcast(a, b) => {
                contribs.push((a.0, g.clone()));
                let mut gb = Matrix::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (j, &x) in g.row(i).iter().enumerate() {
                        gb.set(0, j, gb.get(0, j) + x);
                    }
                }
                contribs.push((b.0, gb));
            }
            Op::Sub(a, b) => {
                contribs.push((a.0, g.clone()));
                contribs.push((b.0, g.map(|x| -x)));
            }
            Op::MulElem(a, b) => {
                contribs.push((a.0, g.zip_map(self.value(*b), |gx, y| gx * y)));
                contribs.push((b.0, g.zip_map(self.value(*a), |gx, x| gx * x)));
            }
            Op::Scale(a, s) => contribs.push((a.0, g.map(|x| s * x))),
            Op::AddScalar(a) => contribs.push((a.0, g.clone())),
            Op::Neg(a) => contribs.push((a.0, g.map(|x| -x))),
            Op::Relu(a) => {
                contribs.push((a.0, g.zip_map(self.value(*a), |gx, x| if x > 0.0 { gx } else { 0.0 })));
            }
            Op::Exp(a) => contribs.push((a.0, g.zip_map(out_value, |gx, y| gx * y))),
            Op::Log(a) => contribs.push((a.0, g.zip_map(self.value(*a), |gx, x| gx / x))),
            Op::Square(a) => {
                contribs.push((a.0, g.zip_map(self.value(*a), |gx, x| 2.0 * gx * x)));
            }
            Op::Rsqrt(a) => {
                contribs.push((a.0, g.zip_map(out_value, |gx, y| -0.5 * gx * y * y * y)));
            }
            Op::Sigmoid(a) => {
                contribs.push((a.0, g.zip_map(out_value, |gx, y| gx * y * (1.0 - y))));
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                contribs.push((a.0, g.zip_map(self.value(*a), |gx, x| if x >= lo && x <= hi { gx } else { 0.0 })));
            }
            Op::ConcatRows(parts) => {
                let mut row = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    if self.nodes[p.0].requires_grad {
                        let mut gp = Matrix::zeros(rows, g.cols());
                        for r in 0..rows {
                            gp.row_mut(r).copy_from_slice(g.row(row + r));
                        }
                        contribs.push((p.0, gp));
                    }
                    row += rows;
                }
            }
            Op::Sum(a) => {
                let m = self.value(*a);
                contribs.push((a.0, Matrix::filled(m.rows(), m.cols(), g.get(0, 0))));
            }
            Op::Mean(a) => {
                let m = self.value(*a);
                contribs.push((a.0, Matrix::filled(m.rows(), m.cols(), g.get(0, 0) / m.len() as f64)));
            }
            Op::SumRows(a) => {
                let m = self.value(*a);
                contribs.push((a.0, Matrix::from_fn(m.rows(), m.cols(), |i, _| g.get(i, 0))));
            }
            Op::LogSumExp(a) => {
                let m = self.value(*a);
                let out = out_value.get(0, 0);
                let gs = g.get(0, 0);
                contribs.push((a.0, m.map(|x| gs * math::exp(x - out))));
            }
            Op::MaskedRowLogSumExp { x, mask } => {
                let m = self.value(*x);
                let mut gx = Matrix::zeros(m.rows(), m.cols());
                for i in 0..m.rows() {
                    let out = out_value.get(i, 0);
                    let gi = g.get(i, 0);
                    for (j, &v) in m.row(i).iter().enumerate() {
                        if mask.get(i, j) != 0.0 {
                            gx.set(i, j, gi * math::exp(v - out));
                        }
                    }
                }
                contribs.push((x.0, gx));
            }
            Op::SoftmaxRows(a) => {
                let s = out_value;
                let mut gx = Matrix::zeros(s.rows(), s.cols());
                for i in 0..s.rows() {
                    let dot: f64 = g.row(i).iter().zip(s.row(i)).map(|(&gx, &sx)| gx * sx).sum();
                    for j in 0..s.cols() {
                        gx.set(i, j, s.get(i, j) * (g.get(i, j) - dot));
                    }
                }
                contribs.push((a.0, gx));
            }
            Op::L2NormalizeRows(a) => {
                let m = self.value(*a);
                let y = out_value;
                let mut gx = Matrix::zeros(m.rows(), m.cols());
                for i in 0..m.rows() {
                    let norm = math::sqrt(m.row(i).iter().map(|&x| x * x).sum());
                    if norm == 0.0 {
                        continue;
                    }
                    let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(&gv, &yv)| gv * yv).sum();
                    for j in 0..m.cols() {
                        gx.set(i, j, (g.get(i, j) - y.get(i, j) * dot) / norm);
                    }
                }
                contribs.push((a.0, gx));
            }
            Op::PairwiseSqDist(a, b) => {
                let (am, bm) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].requires_grad {
                    // dA_i = 2 * (sum_j g_ij) * a_i - 2 * (g B)_i
                    let mut ga = g.matmul(bm);
                    for i in 0..am.rows() {
                        let row_sum: f64 = g.row(i).iter().sum();
                        for (j, &av) in am.row(i).iter().enumerate() {
                            ga.set(i, j, 2.0 * (row_sum * av - ga.get(i, j)));
                        }
                    }
                    contribs.push((a.0, ga));
                }
                if self.nodes[b.0].requires_grad {
                    let mut gb = g.matmul_at_b(am);
                    for j in 0..bm.rows() {
                        let col_sum: f64 = (0..g.rows()).map(|i| g.get(i, j)).sum();
                        for (c, &bv) in bm.row(j).iter().enumerate() {
                            gb.set(j, c, 2.0 * (col_sum * bv - gb.get(j, c)));
                        }
                    }
                    contribs.push((b.0, gb));
                }
            }
            Op::CosineSim(a, b) => {
                let (am, bm) = (self.value(*a), self.value(*b));
                let na: Vec<f64> = (0..am.rows())
                    .map(|i| math::sqrt(am.row(i).iter().map(|&x| x * x).sum()))
                    .collect();
                let nb: Vec<f64> = (0..bm.rows())
                    .map(|j| math::sqrt(bm.row(j).iter().map(|&x| x * x).sum()))
                    .collect();
                // w_ij = g_ij / (na_i nb_j) where both norms are nonzero.
                let mut w = Matrix::zeros(g.rows(), g.cols());
                for i in 0..g.rows() {
                    for j in 0..g.cols() {
                        let d = na[i] * nb[j];
                        if d > 0.0 {
                            w.set(i, j, g.get(i, j) / d);
                        }
                    }
                }
                if self.nodes[a.0].requires_grad {
                    let mut ga = w.matmul(bm);
                    for i in 0..am.rows() {
                        if na[i] == 0.0 {
                            ga.row_mut(i).fill(0.0);
                            continue;
                        }
                        let t: f64 = g.row(i).iter().zip(out_value.row(i)).map(|(&gv, &ov)| gv * ov).sum();
                        let scale = t / (na[i] * na[i]);
                        for (j, &av) in am.row(i).iter().enumerate() {
                            ga.set(i, j, ga.get(i, j) - scale * av);
                        }
                    }
                    contribs.push((a.0, ga));
                }
                if self.nodes[b.0].requires_grad {
                    let mut gb = w.matmul_at_b(am);
                    for j in 0..bm.rows() {
                        if nb[j] == 0.0 {
                            gb.row_mut(j).fill(0.0);
                            continue;
                        }
                        let u: f64 = (0..g.rows()).map(|i| g.get(i, j) * out_value.get(i, j)).sum();
                        let scale = u / (nb[j] * nb[j]);
                        for (c, &bv) in bm.row(j).iter().enumerate() {
                            gb.set(j, c, gb.get(j, c) - scale * bv);
                        }
                    }
                    contribs.push((b.0, gb));
                }
            }
            Op::GatherRows { x, indices } => {
                let m = self.value(*x);
                let mut gx = Matrix::zeros(m.rows(), m.cols());
                for (k, &i) in indices.iter().enumerate() {
                    for (j, &gv) in g.row(k).iter().enumerate() {
                        gx.set(i, j, gx.get(i, j) + gv);
                    }
                }
                contribs.push((x.0, gx));
            }
            Op::MeanPoolRows(a) => {
                let m = self.value(*a);
                let inv = 1.0 / m.rows() as f64;
                let mut gx = Matrix::zeros(m.rows(), m.cols());
                for i in 0..m.rows() {
                    for j in 0..m.cols() {
                        gx.set(i, j, g.get(0, j) * inv);
                    }
                }
                contribs.push((a.0, gx));
            }
            Op::ZeroDiag(a) => {
                let mut gx = g.clone();
                for i in 0..gx.rows() {
                    gx.set(i, i, 0.0);
                }
                contribs.push((a.0, gx));
            }
            Op::RelaxedBernoulli { p, temperature, lo, hi, .. } => {
                let pm = self.value(*p);
                let mut gp = Matrix::zeros(pm.rows(), pm.cols());
                for i in 0..pm.rows() {
                    for j in 0..pm.cols() {
                        if i == j {
                            continue;
                        }
                        let praw = pm.get(i, j);
                        if praw < *lo || praw > *hi {
                            continue;
                        }
                        let y = out_value.get(i, j);
                        // d sigmoid(z)/dp = y(1-y) / temperature * d logit(p)/dp
                        let dlogit = 1.0 / (praw * (1.0 - praw));
                        gp.set(i, j, g.get(i, j) * y * (1.0 - y) / temperature * dlogit);
                    }
                }
                contribs.push((p.0, gp));
            }
            Op::SymNormalize(w) => {
                let wm = self.value(*w);
                let n = wm.rows();
                let mut deg = vec![0.0; n];
                for i in 0..n {
                    deg[i] = wm.row(i).iter().sum::<f64>() + 1.0;
                }
                let s: Vec<f64> = deg.iter().map(|&d| 1.0 / math::sqrt(d)).collect();
                // Degrees are row sums, so a change to W_pq shifts s_p only.
                // r_p collects the i-side sensitivity, c_p the j-side:
                // r_p = sum_j g_pj What_pj s_j, c_p = sum_i g_ip s_i What_ip.
                let mut r = vec![0.0; n];
                let mut c = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        let hat = wm.get(i, j) + if i == j { 1.0 } else { 0.0 };
                        r[i] += g.get(i, j) * s[j] * hat;
                        c[j] += g.get(i, j) * s[i] * hat;
                    }
                }
                let mut gw = Matrix::zeros(n, n);
                for p in 0..n {
                    let dp = -0.5 / (deg[p] * math::sqrt(deg[p]));
                    for q in 0..n {
                        let direct = g.get(p, q) * s[p] * s[q];
                        gw.set(p, q, direct + dp * (r[p] + c[p]));
                    }
                }
                contribs.push((w.0, gw));
            }
        }
        Ok(contribs)
    }
}
