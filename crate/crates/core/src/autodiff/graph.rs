//! Tape-based reverse-mode differentiation over 2-D tensors.
//!
//! Every operation appends a node holding its forward value. Nodes are
//! created in topological order, so `backward` walks the tape in reverse.

use rand::Rng;

use super::tensor::{exact_sum, gemm, Tensor};
use super::TensorError;

/// Additive-mask entry that excludes a position from a softmax.
pub const MASK_SENTINEL: f64 = f64::NEG_INFINITY;

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNormStats {
    pub fn new(features: usize) -> Self {
        Self {
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var, broadcast: bool },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Relu(Var),
    Dropout { a: Var, keep: Vec<f64> },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        valid: Vec<bool>,
        count: usize,
        train: bool,
    },
    MaskedSoftmax { a: Var },
    Scale { a: Var, k: f64 },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows { a: Var, start: usize },
    GroupSum { a: Var, weights: Vec<f64>, group: usize },
    GroupMax { a: Var, argmax: Vec<Option<usize>> },
    Huber { a: Var, delta: f64 },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that required one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `v`; zeros when `v` is not on any path to the root.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }

    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

fn mismatch(what: &str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch(format!("{what}: {a:?} vs {b:?}"))
}

fn require_matrix(t: &Tensor, what: &str) -> Result<(), TensorError> {
    if t.is_matrix() {
        Ok(())
    } else {
        Err(TensorError::ShapeMismatch(format!("{what} needs a matrix, got {:?}", t.shape())))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A leaf whose gradient is tracked.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf treated as a constant by `backward`.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = gemm(self.value(a), false, self.value(b), false)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::MatMul { a, b, trans_b: false }, ng))
    }

    /// `a · b` with every dot product correctly rounded. The result does not
    /// depend on term order, and exact zero terms leave it unchanged.
    pub fn matmul_exact(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        require_matrix(x, "matmul_exact")?;
        require_matrix(y, "matmul_exact")?;
        if x.cols() != y.rows() {
            return Err(mismatch("matmul_exact", x.shape(), y.shape()));
        }
        let (m, k, n) = (x.rows(), x.cols(), y.cols());
        let mut out = Tensor::zeros(&[m, n]);
        let mut terms = Vec::with_capacity(k);
        for i in 0..m {
            let row = x.row(i);
            for j in 0..n {
                terms.clear();
                terms.extend((0..k).filter(|&t| row[t] != 0.0).map(|t| row[t] * y.get(t, j)));
                out.data_mut()[i * n + j] = exact_sum(&terms);
            }
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul { a, b, trans_b: false }, ng))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = gemm(self.value(a), false, self.value(b), true)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::MatMul { a, b, trans_b: true }, ng))
    }

    /// Elementwise sum; `b` may be a single row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        require_matrix(ta, "add")?;
        require_matrix(tb, "add")?;
        let broadcast = if ta.shape() == tb.shape() {
            false
        } else if tb.rows() == 1 && tb.cols() == ta.cols() {
            true
        } else {
            return Err(mismatch("add", ta.shape(), tb.shape()));
        };
        let cols = ta.cols();
        let mut out = ta.clone();
        for (i, x) in out.data_mut().iter_mut().enumerate() {
            *x += if broadcast { tb.data()[i % cols] } else { tb.data()[i] };
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add { a, b, broadcast }, ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("sub", ta.shape(), tb.shape()));
        }
        let mut out = ta.clone();
        for (x, y) in out.data_mut().iter_mut().zip(tb.data()) {
            *x -= y;
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub { a, b }, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("mul", ta.shape(), tb.shape()));
        }
        let mut out = ta.clone();
        for (x, y) in out.data_mut().iter_mut().zip(tb.data()) {
            *x *= y;
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul { a, b }, ng))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for x in out.data_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let ng = self.needs(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let mut out = self.value(a).clone();
        for x in out.data_mut() {
            *x *= k;
        }
        let ng = self.needs(a);
        self.push(out, Op::Scale { a, k }, ng)
    }

    /// Inverted dropout: kept units are scaled by `1/(1-p)` in training;
    /// evaluation is the identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidProbability(p));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(a);
        }
        let scale = 1.0 / (1.0 - p);
        let n = self.value(a).len();
        let keep: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
            .collect();
        let mut out = self.value(a).clone();
        for (x, k) in out.data_mut().iter_mut().zip(&keep) {
            *x *= k;
        }
        let ng = self.needs(a);
        Ok(self.push(out, Op::Dropout { a, keep }, ng))
    }

    /// Batch normalization over the rows of `x` flagged valid in `row_mask`.
    /// Invalid rows produce zero output and receive zero gradient. In train
    /// mode the batch statistics also update `stats` (momentum 0.1,
    /// unbiased running variance).
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut BatchNormStats,
        mode: Mode,
        row_mask: &[bool],
    ) -> Result<Var, TensorError> {
        let tx = self.value(x);
        require_matrix(tx, "batchnorm")?;
        let (rows, cols) = (tx.rows(), tx.cols());
        if row_mask.len() != rows {
            return Err(TensorError::ShapeMismatch(format!(
                "batchnorm row mask has {} entries for {rows} rows",
                row_mask.len()
            )));
        }
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.value(v).shape() != [1, cols] {
                return Err(mismatch(name, self.value(v).shape(), &[1, cols]));
            }
        }
        if stats.running_mean.len() != cols || stats.running_var.len() != cols {
            return Err(TensorError::ShapeMismatch("batchnorm running stats width".into()));
        }
        let count = row_mask.iter().filter(|&&m| m).count();
        let train = mode == Mode::Train;
        let (mean, var) = if train {
            let mut mean = vec![0.0; cols];
            let mut var = vec![0.0; cols];
            if count > 0 {
                for r in (0..rows).filter(|&r| row_mask[r]) {
                    for (c, m) in mean.iter_mut().enumerate() {
                        *m += tx.get(r, c);
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                for r in (0..rows).filter(|&r| row_mask[r]) {
                    for c in 0..cols {
                        let d = tx.get(r, c) - mean[c];
                        var[c] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= count as f64);
            }
            (mean, var)
        } else {
            (stats.running_mean.clone(), stats.running_var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BATCHNORM_EPS).sqrt()).collect();
        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let mut xhat = vec![0.0; rows * cols];
        let mut out = Tensor::zeros(&[rows, cols]);
        let tx = self.value(x);
        for r in (0..rows).filter(|&r| row_mask[r]) {
            for c in 0..cols {
                let h = (tx.get(r, c) - mean[c]) * inv_std[c];
                xhat[r * cols + c] = h;
                out.data_mut()[r * cols + c] = g[c] * h + b[c];
            }
        }
        if train && count > 0 {
            let unbias = if count > 1 {
                count as f64 / (count as f64 - 1.0)
            } else {
                1.0
            };
            for c in 0..cols {
                stats.running_mean[c] = (1.0 - BATCHNORM_MOMENTUM) * stats.running_mean[c] + BATCHNORM_MOMENTUM * mean[c];
                stats.running_var[c] =
                    (1.0 - BATCHNORM_MOMENTUM) * stats.running_var[c] + BATCHNORM_MOMENTUM * var[c] * unbias;
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                valid: row_mask.to_vec(),
                count,
                train,
            },
            ng,
        ))
    }

    /// Row-wise softmax of `logits + mask`, where mask entries are 0 or
    /// [`MASK_SENTINEL`]. Masked positions get exactly zero weight; a fully
    /// masked row yields zeros.
    pub fn masked_softmax(&mut self, logits: Var, mask: &Tensor) -> Result<Var, TensorError> {
        let t = self.value(logits);
        require_matrix(t, "masked_softmax")?;
        if t.shape() != mask.shape() {
            return Err(mismatch("masked_softmax mask", t.shape(), mask.shape()));
        }
        let (rows, cols) = (t.rows(), t.cols());
        let mut out = Tensor::zeros(&[rows, cols]);
        for r in 0..rows {
            let mut max = f64::NEG_INFINITY;
            for c in 0..cols {
                let m = mask.get(r, c);
                if m != MASK_SENTINEL {
                    max = max.max(t.get(r, c) + m);
                }
            }
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut terms = Vec::with_capacity(cols);
            for c in 0..cols {
                let m = mask.get(r, c);
                if m != MASK_SENTINEL {
                    let e = (t.get(r, c) + m - max).exp();
                    out.data_mut()[r * cols + c] = e;
                    terms.push(e);
                }
            }
            let total = exact_sum(&terms);
            for c in 0..cols {
                out.data_mut()[r * cols + c] /= total;
            }
        }
        let ng = self.needs(logits);
        Ok(self.push(out, Op::MaskedSoftmax { a: logits }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::ShapeMismatch("concat of nothing".into()))?;
        let rows = self.value(*first).rows();
        for p in parts {
            require_matrix(self.value(*p), "concat_cols")?;
            if self.value(*p).rows() != rows {
                return Err(mismatch("concat_cols", self.value(*first).shape(), self.value(*p).shape()));
            }
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(r));
            }
        }
        let ng = parts.iter().any(|p| self.needs(*p));
        Ok(self.push(Tensor::matrix(rows, total, out)?, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::ShapeMismatch("concat of nothing".into()))?;
        let cols = self.value(*first).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            require_matrix(t, "concat_rows")?;
            if t.cols() != cols {
                return Err(mismatch("concat_rows", self.value(*first).shape(), t.shape()));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        let ng = parts.iter().any(|p| self.needs(*p));
        Ok(self.push(Tensor::matrix(rows, cols, out)?, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let t = self.value(a);
        require_matrix(t, "slice_rows")?;
        if start + len > t.rows() {
            return Err(TensorError::ShapeMismatch(format!(
                "rows {start}..{} out of {}",
                start + len,
                t.rows()
            )));
        }
        let cols = t.cols();
        let data = t.data()[start * cols..(start + len) * cols].to_vec();
        let ng = self.needs(a);
        Ok(self.push(Tensor::matrix(len, cols, data)?, Op::SliceRows { a, start }, ng))
    }

    /// Weighted row sums over consecutive groups of `group` rows:
    /// output row `g` is `Σ_i weights[g·group + i] · a[g·group + i]`.
    pub fn sum_rows(&mut self, a: Var, weights: &[f64], group: usize) -> Result<Var, TensorError> {
        let t = self.value(a);
        require_matrix(t, "sum_rows")?;
        let (rows, cols) = (t.rows(), t.cols());
        if weights.len() != rows || group == 0 || rows % group != 0 {
            return Err(TensorError::ShapeMismatch(format!(
                "sum_rows: {rows} rows, {} weights, group {group}",
                weights.len()
            )));
        }
        let groups = rows / group;
        let mut out = Tensor::zeros(&[groups, cols]);
        // correctly rounded sums, so duplicating a group's rows doubles its sum exactly
        let mut terms = Vec::with_capacity(group);
        for g in 0..groups {
            for c in 0..cols {
                terms.clear();
                terms.extend(
                    (g * group..(g + 1) * group)
                        .filter(|&r| weights[r] != 0.0)
                        .map(|r| weights[r] * t.get(r, c)),
                );
                out.data_mut()[g * cols + c] = exact_sum(&terms);
            }
        }
        let ng = self.needs(a);
        Ok(self.push(
            out,
            Op::GroupSum {
                a,
                weights: weights.to_vec(),
                group,
            },
            ng,
        ))
    }

    /// Per-column maximum over the valid rows of each group; zero for a
    /// group without valid rows.
    pub fn max_rows(&mut self, a: Var, valid: &[bool], group: usize) -> Result<Var, TensorError> {
        let t = self.value(a);
        require_matrix(t, "max_rows")?;
        let (rows, cols) = (t.rows(), t.cols());
        if valid.len() != rows || group == 0 || rows % group != 0 {
            return Err(TensorError::ShapeMismatch(format!(
                "max_rows: {rows} rows, {} flags, group {group}",
                valid.len()
            )));
        }
        let groups = rows / group;
        let mut out = Tensor::zeros(&[groups, cols]);
        let mut argmax = vec![None; groups * cols];
        for g in 0..groups {
            for c in 0..cols {
                let mut best: Option<usize> = None;
                for r in g * group..(g + 1) * group {
                    if valid[r] && best.is_none_or(|b| t.get(r, c) > t.get(b, c)) {
                        best = Some(r);
                    }
                }
                if let Some(b) = best {
                    out.data_mut()[g * cols + c] = t.get(b, c);
                }
                argmax[g * cols + c] = best;
            }
        }
        let ng = self.needs(a);
        Ok(self.push(out, Op::GroupMax { a, argmax }, ng))
    }

    /// Elementwise Huber penalty with knee `delta`.
    pub fn huber(&mut self, a: Var, delta: f64) -> Var {
        let mut out = self.value(a).clone();
        for x in out.data_mut() {
            *x = huber(*x, delta);
        }
        let ng = self.needs(a);
        self.push(out, Op::Huber { a, delta }, ng)
    }

    /// Sum of all entries as a `[1, 1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    /// Reverse accumulation from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients, TensorError> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(TensorError::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::filled(rv.shape(), 1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<(), TensorError> {
        let mut accumulate = |v: Var, contrib: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    // dA = G·Bᵀ (or G·B when B was used transposed)
                    accumulate(*a, gemm(g, false, tb, !trans_b)?);
                }
                if self.needs(*b) {
                    let db = if *trans_b {
                        gemm(g, true, ta, false)?
                    } else {
                        gemm(ta, true, g, false)?
                    };
                    accumulate(*b, db);
                }
            }
            Op::Add { a, b, broadcast } => {
                accumulate(*a, g.clone());
                if *broadcast {
                    let cols = g.cols();
                    let mut db = Tensor::zeros(&[1, cols]);
                    for r in 0..g.rows() {
                        for (c, d) in db.data_mut().iter_mut().enumerate() {
                            *d += g.get(r, c);
                        }
                    }
                    accumulate(*b, db);
                } else {
                    accumulate(*b, g.clone());
                }
            }
            Op::Sub { a, b } => {
                accumulate(*a, g.clone());
                let mut neg = g.clone();
                neg.data_mut().iter_mut().for_each(|x| *x = -*x);
                accumulate(*b, neg);
            }
            Op::Mul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut da = g.clone();
                da.data_mut().iter_mut().zip(tb.data()).for_each(|(x, y)| *x *= y);
                let mut db = g.clone();
                db.data_mut().iter_mut().zip(ta.data()).for_each(|(x, y)| *x *= y);
                accumulate(*a, da);
                accumulate(*b, db);
            }
            Op::Relu(a) => {
                let mut da = g.clone();
                da.data_mut()
                    .iter_mut()
                    .zip(self.value(*a).data())
                    .for_each(|(d, x)| {
                        if *x <= 0.0 {
                            *d = 0.0
                        }
                    });
                accumulate(*a, da);
            }
            Op::Scale { a, k } => {
                let mut da = g.clone();
                da.data_mut().iter_mut().for_each(|x| *x *= k);
                accumulate(*a, da);
            }
            Op::Dropout { a, keep } => {
                let mut da = g.clone();
                da.data_mut().iter_mut().zip(keep).for_each(|(x, k)| *x *= k);
                accumulate(*a, da);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                valid,
                count,
                train,
            } => {
                let (rows, cols) = (g.rows(), g.cols());
                let gam = self.value(*gamma).data();
                let mut dgamma = Tensor::zeros(&[1, cols]);
                let mut dbeta = Tensor::zeros(&[1, cols]);
                let mut sum_dh = vec![0.0; cols];
                let mut sum_dh_h = vec![0.0; cols];
                for r in (0..rows).filter(|&r| valid[r]) {
                    for c in 0..cols {
                        let gy = g.get(r, c);
                        let h = xhat[r * cols + c];
                        dgamma.data_mut()[c] += gy * h;
                        dbeta.data_mut()[c] += gy;
                        let dh = gy * gam[c];
                        sum_dh[c] += dh;
                        sum_dh_h[c] += dh * h;
                    }
                }
                if self.needs(*x) {
                    let mut dx = Tensor::zeros(&[rows, cols]);
                    let m = *count as f64;
                    for r in (0..rows).filter(|&r| valid[r]) {
                        for c in 0..cols {
                            let dh = g.get(r, c) * gam[c];
                            dx.data_mut()[r * cols + c] = if *train {
                                inv_std[c] / m * (m * dh - sum_dh[c] - xhat[r * cols + c] * sum_dh_h[c])
                            } else {
                                dh * inv_std[c]
                            };
                        }
                    }
                    accumulate(*x, dx);
                }
                accumulate(*gamma, dgamma);
                accumulate(*beta, dbeta);
            }
            Op::MaskedSoftmax { a } => {
                let y = &self.nodes[i].value;
                let (rows, cols) = (y.rows(), y.cols());
                let mut da = Tensor::zeros(&[rows, cols]);
                for r in 0..rows {
                    let dot: f64 = (0..cols).map(|c| g.get(r, c) * y.get(r, c)).sum();
                    for c in 0..cols {
                        let yc = y.get(r, c);
                        if yc != 0.0 {
                            da.data_mut()[r * cols + c] = yc * (g.get(r, c) - dot);
                        }
                    }
                }
                accumulate(*a, da);
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    let mut dp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        dp.extend_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    offset += w;
                    accumulate(*p, Tensor::matrix(rows, w, dp)?);
                }
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for p in parts {
                    let h = self.value(*p).rows();
                    let dp = g.data()[offset * cols..(offset + h) * cols].to_vec();
                    offset += h;
                    accumulate(*p, Tensor::matrix(h, cols, dp)?);
                }
            }
            Op::SliceRows { a, start } => {
                let src = self.value(*a);
                let cols = src.cols();
                let mut da = Tensor::zeros(src.shape());
                da.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                accumulate(*a, da);
            }
            Op::GroupSum { a, weights, group } => {
                let src = self.value(*a);
                let cols = src.cols();
                let mut da = Tensor::zeros(src.shape());
                for (r, w) in weights.iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    let gr = r / group;
                    for c in 0..cols {
                        da.data_mut()[r * cols + c] = w * g.get(gr, c);
                    }
                }
                accumulate(*a, da);
            }
            Op::GroupMax { a, argmax } => {
                let src = self.value(*a);
                let cols = src.cols();
                let mut da = Tensor::zeros(src.shape());
                for (k, best) in argmax.iter().enumerate() {
                    if let Some(r) = best {
                        let c = k % cols;
                        da.data_mut()[r * cols + c] += g.data()[k];
                    }
                }
                accumulate(*a, da);
            }
            Op::Huber { a, delta } => {
                let mut da = g.clone();
                da.data_mut()
                    .iter_mut()
                    .zip(self.value(*a).data())
                    .for_each(|(d, x)| *d *= huber_grad(*x, *delta));
                accumulate(*a, da);
            }
            Op::Sum(a) => {
                accumulate(*a, Tensor::filled(self.value(*a).shape(), g.data()[0]));
            }
        }
        Ok(())
    }
}

/// `a²/2` for `|a| ≤ δ`, else `δ(|a| − δ/2)`.
pub fn huber(a: f64, delta: f64) -> f64 {
    if a.abs() <= delta {
        0.5 * a * a
    } else {
        delta * (a.abs() - 0.5 * delta)
    }
}

pub fn huber_grad(a: f64, delta: f64) -> f64 {
    if a.abs() <= delta {
        a
    } else {
        delta * a.signum()
    }
}
