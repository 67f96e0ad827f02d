//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! Every primitive pushes one node holding its forward value and enough
//! context to replay its adjoint. [`Tape::backward`] walks the nodes in
//! reverse and accumulates gradients for every node that the loss depends on.

use std::sync::atomic::{AtomicU64, Ordering};

use super::matrix::{gemm, row_moments, softmax_row, Matrix};
use crate::error::{invalid, Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a specific [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    MatMulT(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Gelu(usize),
    GatherRows {
        table: usize,
        index: Vec<usize>,
    },
    Softmax(usize),
    Dropout {
        x: usize,
        keep: Vec<f64>,
    },
    BlockScores {
        q: usize,
        k: usize,
        block: usize,
    },
    BlockApply {
        p: usize,
        v: usize,
        block: usize,
    },
    RelQuery {
        q: usize,
        table: usize,
        block: usize,
        index: std::sync::Arc<Vec<usize>>,
    },
    RelKey {
        k: usize,
        table: usize,
        block: usize,
        index: std::sync::Arc<Vec<usize>>,
    },
    TileRows {
        x: usize,
        times: usize,
    },
    GatherScalars {
        table: usize,
        index: Vec<usize>,
    },
    ResetRowCol {
        x: usize,
        row_value: usize,
        col_value: usize,
    },
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        probs: Matrix,
    },
    Sum(usize),
    SumSquares(usize),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Ordered record of primitive operations.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn gelu_parts(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const A: f64 = 0.044_715;
    let inner = C * (x + A * x * x * x);
    let t = inner.tanh();
    let value = 0.5 * x * (1.0 + t);
    let deriv = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * A * x * x);
    (value, deriv)
}

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    gelu_parts(x).0
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::UnrecordedVar);
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Matrix, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        })
    }

    fn val(&self, i: usize) -> &Matrix {
        &self.nodes[i].value
    }

    pub fn value(&self, v: Var) -> Result<&Matrix> {
        Ok(self.val(self.idx(v)?))
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Constant,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = self.val(ia).matmul(self.val(ib))?;
        self.push(out, Op::MatMul(ia, ib), "matmul")
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = self.val(ia).matmul_t(self.val(ib))?;
        self.push(out, Op::MatMulT(ia, ib), "matmul_t")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = self.val(ia).add(self.val(ib))?;
        self.push(out, Op::Add(ia, ib), "add")
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = self.val(ia).hadamard(self.val(ib))?;
        self.push(out, Op::Mul(ia, ib), "mul")
    }

    /// Adds a `1×cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ia, ir) = (self.idx(a)?, self.idx(row)?);
        let (x, r) = (self.val(ia), self.val(ir));
        if r.shape() != (1, x.cols()) {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                left: x.shape(),
                right: r.shape(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(ia, ir), "add_row")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.val(ia).scale(s);
        self.push(out, Op::Scale(ia, s), "scale")
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (ix, ig, ib) = (self.idx(x)?, self.idx(gain)?, self.idx(bias)?);
        let (xm, g, b) = (self.val(ix), self.val(ig), self.val(ib));
        if g.shape() != (1, xm.cols()) || b.shape() != (1, xm.cols()) {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                left: xm.shape(),
                right: g.shape(),
            });
        }
        let mut xhat = Matrix::zeros(xm.rows(), xm.cols());
        let mut out = Matrix::zeros(xm.rows(), xm.cols());
        let mut inv_std = Vec::with_capacity(xm.rows());
        for r in 0..xm.rows() {
            let row = xm.row(r);
            let (mean, is) = row_moments(row, eps);
            inv_std.push(is);
            let h = xhat.row_mut(r);
            for c in 0..row.len() {
                h[c] = (row[c] - mean) * is;
            }
            let o = out.row_mut(r);
            for c in 0..row.len() {
                o[c] = h[c] * g.data()[c] + b.data()[c];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x: ix,
                gain: ig,
                bias: ib,
                xhat,
                inv_std,
            },
            "layer_norm",
        )
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let out = self.val(ix).map(gelu);
        self.push(out, Op::Gelu(ix), "gelu")
    }

    /// Row `index[r]` of `table` becomes row `r` of the output.
    pub fn gather_rows(&mut self, table: Var, index: Vec<usize>) -> Result<Var> {
        let it = self.idx(table)?;
        let t = self.val(it);
        if let Some(&bad) = index.iter().find(|&&i| i >= t.rows()) {
            return Err(invalid(format!("gather index {bad} out of range for {} rows", t.rows())));
        }
        let out = t.select_rows(&index);
        self.push(out, Op::GatherRows { table: it, index }, "gather_rows")
    }

    /// Masked row softmax; `mask` is a 0/1 matrix of the same shape.
    pub fn softmax(&mut self, x: Var, mask: &Matrix) -> Result<Var> {
        let ix = self.idx(x)?;
        let xm = self.val(ix);
        if xm.shape() != mask.shape() {
            return Err(Error::ShapeMismatch {
                op: "softmax",
                left: xm.shape(),
                right: mask.shape(),
            });
        }
        let out = super::matrix::softmax_rows(xm, mask)?;
        self.push(out, Op::Softmax(ix), "softmax")
    }

    /// Multiplies element-wise by a fixed `keep` mask (already rescaled).
    pub fn dropout(&mut self, x: Var, keep: Vec<f64>) -> Result<Var> {
        let ix = self.idx(x)?;
        let xm = self.val(ix);
        if keep.len() != xm.data().len() {
            return Err(invalid("dropout mask length mismatch"));
        }
        let data = xm.data().iter().zip(&keep).map(|(a, b)| a * b).collect();
        let out = Matrix::from_vec(xm.rows(), xm.cols(), data)?;
        self.push(out, Op::Dropout { x: ix, keep }, "dropout")
    }

    /// For `q`, `k` made of stacked blocks of `block` rows, returns the
    /// stacked per-block score matrices `q_b · k_bᵀ` (shape `rows × block`).
    pub fn block_scores(&mut self, q: Var, k: Var, block: usize) -> Result<Var> {
        let (iq, ik) = (self.idx(q)?, self.idx(k)?);
        let (qm, km) = (self.val(iq), self.val(ik));
        check_blocks("block_scores", qm, km, block)?;
        let d = qm.cols();
        let mut out = Matrix::zeros(qm.rows(), block);
        for b in 0..qm.rows() / block {
            let off = b * block * d;
            gemm(
                block,
                d,
                block,
                &qm.data()[off..],
                (d, 1),
                &km.data()[off..],
                (1, d),
                &mut out.data_mut()[b * block * block..],
                0.0,
            );
        }
        self.push(out, Op::BlockScores { q: iq, k: ik, block }, "block_scores")
    }

    /// Per-block `p_b · v_b` for stacked `rows × block` weights and `rows × d` values.
    pub fn block_apply(&mut self, p: Var, v: Var, block: usize) -> Result<Var> {
        let (ip, iv) = (self.idx(p)?, self.idx(v)?);
        let (pm, vm) = (self.val(ip), self.val(iv));
        if pm.cols() != block || pm.rows() != vm.rows() || vm.rows() % block != 0 {
            return Err(Error::ShapeMismatch {
                op: "block_apply",
                left: pm.shape(),
                right: vm.shape(),
            });
        }
        let d = vm.cols();
        let mut out = Matrix::zeros(vm.rows(), d);
        for b in 0..vm.rows() / block {
            gemm(
                block,
                block,
                d,
                &pm.data()[b * block * block..],
                (block, 1),
                &vm.data()[b * block * d..],
                (d, 1),
                &mut out.data_mut()[b * block * d..],
                0.0,
            );
        }
        self.push(out, Op::BlockApply { p: ip, v: iv, block }, "block_apply")
    }

    /// Query-side relative scores: `out[b·L+i, j] = q[b·L+i] · table[index[i·L+j]]`.
    pub fn rel_query(
        &mut self,
        q: Var,
        table: Var,
        block: usize,
        index: std::sync::Arc<Vec<usize>>,
    ) -> Result<Var> {
        let (iq, it) = (self.idx(q)?, self.idx(table)?);
        let out = rel_scores(self.val(iq), self.val(it), block, &index, false)?;
        self.push(
            out,
            Op::RelQuery {
                q: iq,
                table: it,
                block,
                index,
            },
            "rel_query",
        )
    }

    /// Key-side relative scores: `out[b·L+i, j] = k[b·L+j] · table[index[i·L+j]]`.
    pub fn rel_key(
        &mut self,
        k: Var,
        table: Var,
        block: usize,
        index: std::sync::Arc<Vec<usize>>,
    ) -> Result<Var> {
        let (ik, it) = (self.idx(k)?, self.idx(table)?);
        let out = rel_scores(self.val(ik), self.val(it), block, &index, true)?;
        self.push(
            out,
            Op::RelKey {
                k: ik,
                table: it,
                block,
                index,
            },
            "rel_key",
        )
    }

    /// Stacks `times` copies of `x` vertically.
    pub fn tile_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let ix = self.idx(x)?;
        let xm = self.val(ix);
        let mut data = Vec::with_capacity(xm.data().len() * times);
        for _ in 0..times {
            data.extend_from_slice(xm.data());
        }
        let out = Matrix::from_vec(xm.rows() * times, xm.cols(), data)?;
        self.push(out, Op::TileRows { x: ix, times }, "tile_rows")
    }

    /// Builds a `rows × cols` matrix whose entries are `table[index[r·cols+c]]`
    /// for a `1×n` table of scalars.
    pub fn gather_scalars(&mut self, table: Var, rows: usize, cols: usize, index: Vec<usize>) -> Result<Var> {
        let it = self.idx(table)?;
        let t = self.val(it);
        if index.len() != rows * cols || index.iter().any(|&i| i >= t.data().len()) {
            return Err(invalid("gather_scalars index out of range"));
        }
        let data = index.iter().map(|&i| t.data()[i]).collect();
        let out = Matrix::from_vec(rows, cols, data)?;
        self.push(out, Op::GatherScalars { table: it, index }, "gather_scalars")
    }

    /// Replaces row 0 by the scalar `row_value` and the rest of column 0 by
    /// the scalar `col_value`.
    pub fn reset_row_col(&mut self, x: Var, row_value: Var, col_value: Var) -> Result<Var> {
        let (ix, ir, ic) = (self.idx(x)?, self.idx(row_value)?, self.idx(col_value)?);
        if self.val(ir).shape() != (1, 1) || self.val(ic).shape() != (1, 1) {
            return Err(invalid("reset_row_col expects scalar replacements"));
        }
        let (rv, cv) = (self.val(ir).as_scalar(), self.val(ic).as_scalar());
        let mut out = self.val(ix).clone();
        if out.rows() > 0 {
            for v in out.row_mut(0) {
                *v = rv;
            }
            for r in 1..out.rows() {
                out.set(r, 0, cv);
            }
        }
        self.push(
            out,
            Op::ResetRowCol {
                x: ix,
                row_value: ir,
                col_value: ic,
            },
            "reset_row_col",
        )
    }

    /// Mean softmax cross-entropy of each row against its target column.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<usize>) -> Result<Var> {
        let il = self.idx(logits)?;
        let lm = self.val(il);
        if targets.len() != lm.rows() {
            return Err(invalid("cross_entropy: one target per row required"));
        }
        if targets.is_empty() {
            return Err(Error::NoMaskedPositions);
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= lm.cols()) {
            return Err(invalid(format!("target {t} out of range")));
        }
        let ones = vec![1.0; lm.cols()];
        let mut probs = Matrix::zeros(lm.rows(), lm.cols());
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            softmax_row(lm.row(r), &ones, probs.row_mut(r)).expect("unmasked");
            let row = lm.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
        }
        loss /= targets.len() as f64;
        self.push(
            Matrix::scalar(loss),
            Op::CrossEntropy {
                logits: il,
                targets,
                probs,
            },
            "cross_entropy",
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let s = self.val(ix).sum();
        self.push(Matrix::scalar(s), Op::Sum(ix), "sum")
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let s = self.val(ix).frobenius_sq();
        self.push(Matrix::scalar(s), Op::SumSquares(ix), "sum_squares")
    }

    /// Reverse sweep from a `1×1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let il = self.idx(loss)?;
        if self.val(il).shape() != (1, 1) {
            return Err(invalid("backward requires a scalar loss"));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[il] = Some(Matrix::scalar(1.0));
        for i in (0..=il).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
            leaf: self.nodes.iter().map(|n| matches!(n.op, Op::Leaf)).collect(),
            grads,
        })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (am, bm) = (self.val(*a), self.val(*b));
                acc(grads, *a, g.matmul_t(bm).expect("shape"));
                acc(grads, *b, am.t_matmul(g).expect("shape"));
            }
            Op::MatMulT(a, b) => {
                // out = a bᵀ: da = g b, db = gᵀ a
                let (am, bm) = (self.val(*a), self.val(*b));
                acc(grads, *a, g.matmul(bm).expect("shape"));
                acc(grads, *b, g.t_matmul(am).expect("shape"));
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::AddRow(a, r) => {
                acc(grads, *a, g.clone());
                let mut gr = Matrix::zeros(1, g.cols());
                for row in 0..g.rows() {
                    for (o, v) in gr.data_mut().iter_mut().zip(g.row(row)) {
                        *o += v;
                    }
                }
                acc(grads, *r, gr);
            }
            Op::Mul(a, b) => {
                let (am, bm) = (self.val(*a), self.val(*b));
                acc(grads, *a, g.hadamard(bm).expect("shape"));
                acc(grads, *b, g.hadamard(am).expect("shape"));
            }
            Op::Scale(a, s) => acc(grads, *a, g.scale(*s)),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gm = self.val(*gain);
                let n = g.cols() as f64;
                let mut dx = Matrix::zeros(g.rows(), g.cols());
                let mut dgain = Matrix::zeros(1, g.cols());
                let mut dbias = Matrix::zeros(1, g.cols());
                let mut dxhat = vec![0.0; g.cols()];
                for r in 0..g.rows() {
                    let (gr, hr) = (g.row(r), xhat.row(r));
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for c in 0..g.cols() {
                        dxhat[c] = gr[c] * gm.data()[c];
                        s1 += dxhat[c];
                        s2 += dxhat[c] * hr[c];
                        dgain.data_mut()[c] += gr[c] * hr[c];
                        dbias.data_mut()[c] += gr[c];
                    }
                    let k = inv_std[r] / n;
                    let out = dx.row_mut(r);
                    for c in 0..out.len() {
                        out[c] = k * (n * dxhat[c] - s1 - hr[c] * s2);
                    }
                }
                acc(grads, *x, dx);
                acc(grads, *gain, dgain);
                acc(grads, *bias, dbias);
            }
            Op::Gelu(x) => {
                let xm = self.val(*x);
                let data = xm.data().iter().zip(g.data()).map(|(&v, &gv)| gv * gelu_parts(v).1).collect();
                acc(grads, *x, Matrix::from_vec(g.rows(), g.cols(), data).expect("shape"));
            }
            Op::GatherRows { table, index } => {
                let t = self.val(*table);
                let mut dt = Matrix::zeros(t.rows(), t.cols());
                for (r, &src) in index.iter().enumerate() {
                    for (o, v) in dt.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(grads, *table, dt);
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (o, (yv, gv)) in dx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = yv * (gv - dot);
                    }
                }
                acc(grads, *x, dx);
            }
            Op::Dropout { x, keep } => {
                let data = g.data().iter().zip(keep).map(|(a, b)| a * b).collect();
                acc(grads, *x, Matrix::from_vec(g.rows(), g.cols(), data).expect("shape"));
            }
            Op::BlockScores { q, k, block } => {
                let (qm, km) = (self.val(*q), self.val(*k));
                let d = qm.cols();
                let block = *block;
                let mut dq = Matrix::zeros(qm.rows(), d);
                let mut dk = Matrix::zeros(km.rows(), d);
                for b in 0..qm.rows() / block {
                    let go = b * block * block;
                    let off = b * block * d;
                    // dq_b = g_b k_b
                    gemm(block, block, d, &g.data()[go..], (block, 1), &km.data()[off..], (d, 1), &mut dq.data_mut()[off..], 0.0);
                    // dk_b = g_bᵀ q_b
                    gemm(block, block, d, &g.data()[go..], (1, block), &qm.data()[off..], (d, 1), &mut dk.data_mut()[off..], 0.0);
                }
                acc(grads, *q, dq);
                acc(grads, *k, dk);
            }
            Op::BlockApply { p, v, block } => {
                let (pm, vm) = (self.val(*p), self.val(*v));
                let d = vm.cols();
                let block = *block;
                let mut dp = Matrix::zeros(pm.rows(), block);
                let mut dv = Matrix::zeros(vm.rows(), d);
                for b in 0..vm.rows() / block {
                    let po = b * block * block;
                    let off = b * block * d;
                    // dp_b = g_b v_bᵀ
                    gemm(block, d, block, &g.data()[off..], (d, 1), &vm.data()[off..], (1, d), &mut dp.data_mut()[po..], 0.0);
                    // dv_b = p_bᵀ g_b
                    gemm(block, block, d, &pm.data()[po..], (1, block), &g.data()[off..], (d, 1), &mut dv.data_mut()[off..], 0.0);
                }
                acc(grads, *p, dp);
                acc(grads, *v, dv);
            }
            Op::RelQuery { q, table, block, index } => {
                let (dq, dt) = rel_scores_backward(self.val(*q), self.val(*table), *block, index, g, false);
                acc(grads, *q, dq);
                acc(grads, *table, dt);
            }
            Op::RelKey { k, table, block, index } => {
                let (dk, dt) = rel_scores_backward(self.val(*k), self.val(*table), *block, index, g, true);
                acc(grads, *k, dk);
                acc(grads, *table, dt);
            }
            Op::TileRows { x, times } => {
                let xm = self.val(*x);
                let n = xm.data().len();
                let mut dx = Matrix::zeros(xm.rows(), xm.cols());
                for t in 0..*times {
                    for (o, v) in dx.data_mut().iter_mut().zip(&g.data()[t * n..(t + 1) * n]) {
                        *o += v;
                    }
                }
                acc(grads, *x, dx);
            }
            Op::GatherScalars { table, index } => {
                let t = self.val(*table);
                let mut dt = Matrix::zeros(t.rows(), t.cols());
                for (&i, &gv) in index.iter().zip(g.data()) {
                    dt.data_mut()[i] += gv;
                }
                acc(grads, *table, dt);
            }
            Op::ResetRowCol { x, row_value, col_value } => {
                let mut dx = g.clone();
                let mut drow = 0.0;
                let mut dcol = 0.0;
                if dx.rows() > 0 {
                    for v in dx.row_mut(0) {
                        drow += *v;
                        *v = 0.0;
                    }
                    for r in 1..dx.rows() {
                        dcol += dx.get(r, 0);
                        dx.set(r, 0, 0.0);
                    }
                }
                acc(grads, *x, dx);
                acc(grads, *row_value, Matrix::scalar(drow));
                acc(grads, *col_value, Matrix::scalar(dcol));
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let scale = g.as_scalar() / targets.len() as f64;
                let mut dl = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    dl.data_mut()[r * probs.cols() + t] -= 1.0;
                }
                for v in dl.data_mut() {
                    *v *= scale;
                }
                acc(grads, *logits, dl);
            }
            Op::Sum(x) => {
                let xm = self.val(*x);
                acc(grads, *x, Matrix::filled(xm.rows(), xm.cols(), g.as_scalar()));
            }
            Op::SumSquares(x) => {
                let xm = self.val(*x);
                acc(grads, *x, xm.scale(2.0 * g.as_scalar()));
            }
        }
    }
}

fn check_blocks(op: &'static str, a: &Matrix, b: &Matrix, block: usize) -> Result<()> {
    if block == 0 || a.shape() != b.shape() || a.rows() % block != 0 {
        return Err(Error::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

fn rel_scores(x: &Matrix, table: &Matrix, block: usize, index: &[usize], key_side: bool) -> Result<Matrix> {
    if block == 0 || x.rows() % block != 0 || table.cols() != x.cols() || index.len() != block * block {
        return Err(Error::ShapeMismatch {
            op: "rel_scores",
            left: x.shape(),
            right: table.shape(),
        });
    }
    if index.iter().any(|&i| i >= table.rows()) {
        return Err(invalid("relative offset index out of table range"));
    }
    let mut out = Matrix::zeros(x.rows(), block);
    for b in 0..x.rows() / block {
        for i in 0..block {
            for j in 0..block {
                let src = if key_side { x.row(b * block + j) } else { x.row(b * block + i) };
                let a = table.row(index[i * block + j]);
                out.set(b * block + i, j, dot(src, a));
            }
        }
    }
    Ok(out)
}

fn rel_scores_backward(
    x: &Matrix,
    table: &Matrix,
    block: usize,
    index: &[usize],
    g: &Matrix,
    key_side: bool,
) -> (Matrix, Matrix) {
    let mut dx = Matrix::zeros(x.rows(), x.cols());
    let mut dt = Matrix::zeros(table.rows(), table.cols());
    let d = x.cols();
    for b in 0..x.rows() / block {
        for i in 0..block {
            for j in 0..block {
                let gv = g.get(b * block + i, j);
                if gv == 0.0 {
                    continue;
                }
                let src_row = if key_side { b * block + j } else { b * block + i };
                let t = index[i * block + j];
                for c in 0..d {
                    dx.data_mut()[src_row * d + c] += gv * table.get(t, c);
                    dt.data_mut()[t * d + c] += gv * x.get(src_row, c);
                }
            }
        }
    }
    (dx, dt)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn acc(grads: &mut [Option<Matrix>], i: usize, g: Matrix) {
    match &mut grads[i] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Result of a reverse sweep.
pub struct Gradients {
    tape: u64,
    shapes: Vec<(usize, usize)>,
    leaf: Vec<bool>,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a recorded leaf; zero when the
    /// loss does not depend on it.
    pub fn get(&self, v: Var) -> Result<Matrix> {
        if v.tape != self.tape || v.index >= self.grads.len() || !self.leaf[v.index] {
            return Err(Error::UnrecordedVar);
        }
        Ok(match &self.grads[v.index] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.index];
                Matrix::zeros(r, c)
            }
        })
    }

    pub(crate) fn take(&mut self, v: Var) -> Result<Matrix> {
        if v.tape != self.tape || v.index >= self.grads.len() || !self.leaf[v.index] {
            return Err(Error::UnrecordedVar);
        }
        Ok(self.grads[v.index].take().unwrap_or_else(|| {
            let (r, c) = self.shapes[v.index];
            Matrix::zeros(r, c)
        }))
    }
}

/// Records `leaves`, evaluates `loss_fn` on them and returns the loss value
/// with `∂loss/∂leaf` for every leaf.
pub fn gradient<F>(leaves: &[Matrix], loss_fn: F) -> Result<(f64, Vec<Matrix>)>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|m| tape.leaf(m.clone())).collect();
    let loss = loss_fn(&mut tape, &vars)?;
    let value = tape.value(loss)?.as_scalar();
    let grads = tape.backward(loss)?;
    let out = vars.iter().map(|&v| grads.get(v)).collect::<Result<Vec<_>>>()?;
    Ok((value, out))
}
