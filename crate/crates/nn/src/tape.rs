//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the tape in reverse and accumulates adjoints into nodes that
//! (transitively) depend on a parameter. Constants never receive gradients,
//! which is how inputs are detached from the graph.

use std::rc::Rc;

use crate::error::{shape_err, Result};
use crate::mask::AttentionMask;
use crate::params::{Grads, ParamId, ParamStore};
use crate::rope::RopeTable;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    MaskedSoftmax(Var),
    Rope(Var, Rc<RopeTable>),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

/// `C (m×n) += A (m×k) · B (k×n)` with arbitrary element strides on A and B.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_rs: usize,
    a_cs: usize,
    b: &[f64],
    b_rs: usize,
    b_cs: usize,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: callers pass slices covering every strided index below
    // (a: m×k, b: k×n, c: m×n row-major), checked by the shape logic of the
    // op that calls this.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_rs as isize,
            a_cs as isize,
            b.as_ptr(),
            b_rs as isize,
            b_cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Exact (erf-based) GELU.
pub fn gelu_scalar(x: f64) -> f64 {
    gelu(x)
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A value that takes no part in differentiation.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        if tb.shape().len() != 2 || tb.rows() != k {
            return Err(shape_err(
                "matmul",
                format!("{:?} x {:?}", ta.shape(), tb.shape()),
            ));
        }
        let n = tb.cols();
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.values(), k, 1, tb.values(), n, 1, &mut out, 0.0);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), needs))
    }

    /// `a · bᵀ` for `a: m×k`, `b: n×k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        if tb.cols() != k {
            return Err(shape_err(
                "matmul_nt",
                format!("{:?} x {:?}ᵀ", ta.shape(), tb.shape()),
            ));
        }
        let n = tb.rows();
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.values(), k, 1, tb.values(), 1, k, &mut out, 0.0);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulNt(a, b), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", format!("{:?} + {:?}", ta.shape(), tb.shape())));
        }
        let out: Vec<f64> = ta.values().iter().zip(tb.values()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add(a, b), needs))
    }

    /// Adds a length-`cols` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let cols = tx.cols();
        if tb.len() != cols {
            return Err(shape_err(
                "add_row",
                format!("{:?} + row {:?}", tx.shape(), tb.shape()),
            ));
        }
        let mut out = tx.values().to_vec();
        for row in out.chunks_mut(cols) {
            for (o, b) in row.iter_mut().zip(tb.values()) {
                *o += b;
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(t, Op::AddRow(x, bias), needs))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let tx = self.value(x);
        let out = tx.values().iter().map(|v| v * s).collect();
        let t = Tensor::new(tx.shape().to_vec(), out).expect("same shape");
        let needs = self.needs(x);
        self.push(t, Op::Scale(x, s), needs)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let out = tx.values().iter().map(|&v| gelu(v)).collect();
        let t = Tensor::new(tx.shape().to_vec(), out).expect("same shape");
        let needs = self.needs(x);
        self.push(t, Op::Gelu(x), needs)
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let cols = tx.cols();
        if tg.len() != cols || tb.len() != cols {
            return Err(shape_err(
                "layer_norm",
                format!("{:?} with gain {:?} bias {:?}", tx.shape(), tg.shape(), tb.shape()),
            ));
        }
        let rows = tx.rows();
        let mut xhat = Vec::with_capacity(tx.len());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(tx.len());
        for row in tx.values().chunks(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let r = 1.0 / (var + eps).sqrt();
            rstd.push(r);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mean) * r;
                xhat.push(h);
                out.push(h * tg.values()[j] + tb.values()[j]);
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            needs,
        ))
    }

    /// Row-wise `softmax(x + mask)`. Blocked entries come out exactly zero.
    pub fn masked_softmax(&mut self, x: Var, mask: &AttentionMask) -> Result<Var> {
        let tx = self.value(x);
        let (rows, cols) = (tx.rows(), tx.cols());
        if rows != mask.len() || cols != mask.len() {
            return Err(shape_err(
                "masked_softmax",
                format!("{:?} with {}×{} mask", tx.shape(), mask.len(), mask.len()),
            ));
        }
        let mut out = Vec::with_capacity(tx.len());
        for (i, row) in tx.values().chunks(cols).enumerate() {
            let start = out.len();
            let mut max = f64::NEG_INFINITY;
            for (j, v) in row.iter().enumerate() {
                let s = v + mask.get(i, j);
                out.push(s);
                max = max.max(s);
            }
            let mut sum = 0.0;
            for s in &mut out[start..] {
                *s = if *s == f64::NEG_INFINITY { 0.0 } else { (*s - max).exp() };
                sum += *s;
            }
            for s in &mut out[start..] {
                *s /= sum;
            }
        }
        let t = Tensor::matrix(rows, cols, out)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::MaskedSoftmax(x), needs))
    }

    /// Rotary embedding over `x: L × (heads·d_head)`.
    pub fn rope(&mut self, x: Var, table: Rc<RopeTable>) -> Result<Var> {
        let tx = self.value(x);
        let head_dim = 2 * table.half;
        if head_dim == 0 || tx.cols() % head_dim != 0 || tx.rows() != table.positions() {
            return Err(shape_err(
                "rope",
                format!(
                    "{:?} with {} positions and head dim {head_dim}",
                    tx.shape(),
                    table.positions()
                ),
            ));
        }
        let mut out = tx.clone();
        let cols = out.cols();
        table.rotate(out.values_mut(), cols, false);
        let needs = self.needs(x);
        Ok(self.push(out, Op::Rope(x, table), needs))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let cols = tx.cols();
        if start + len > cols {
            return Err(shape_err(
                "slice_cols",
                format!("columns {start}..{} of {cols}", start + len),
            ));
        }
        let mut out = Vec::with_capacity(tx.rows() * len);
        for row in tx.values().chunks(cols) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let t = Tensor::matrix(tx.rows(), len, out)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::SliceCols { x, start }, needs))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.value(p).rows(),
            None => return Err(shape_err("concat_cols", "no inputs")),
        };
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(shape_err("concat_cols", "row counts differ"));
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).values()[r * w..(r + 1) * w]);
            }
        }
        let t = Tensor::matrix(rows, total, out)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), needs))
    }

    /// Gradient of the last `backward` call with respect to `v`, if `v`
    /// received one.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    /// Backpropagates from `out` with upstream gradient `seed` (defaults to
    /// ones, which for a scalar output is d out / d out).
    pub fn backward(&mut self, out: Var, seed: Option<&[f64]>) -> Result<()> {
        let n_out = self.value(out).len();
        let seed = match seed {
            Some(s) if s.len() != n_out => {
                return Err(shape_err(
                    "backward",
                    format!("seed of length {} for output of {n_out}", s.len()),
                ))
            }
            Some(s) => s.to_vec(),
            None => vec![1.0; n_out],
        };
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(seed);

        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let nodes = &self.nodes;
            let val = |v: Var| &nodes[v.0].value;
            let needs = |v: Var| nodes[v.0].needs_grad;
            match &node.op {
                Op::Constant | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    if needs(*a) {
                        let da = Self::acc(&mut grads, *a, m * k);
                        gemm(m, n, k, &g, n, 1, tb.values(), 1, n, da, 1.0);
                    }
                    if needs(*b) {
                        let db = Self::acc(&mut grads, *b, k * n);
                        gemm(k, m, n, ta.values(), 1, k, &g, n, 1, db, 1.0);
                    }
                }
                Op::MatMulNt(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                    if needs(*a) {
                        let da = Self::acc(&mut grads, *a, m * k);
                        gemm(m, n, k, &g, n, 1, tb.values(), k, 1, da, 1.0);
                    }
                    if needs(*b) {
                        let db = Self::acc(&mut grads, *b, n * k);
                        gemm(n, m, k, &g, 1, n, ta.values(), k, 1, db, 1.0);
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if needs(v) {
                            let d = Self::acc(&mut grads, v, g.len());
                            for (x, y) in d.iter_mut().zip(&g) {
                                *x += y;
                            }
                        }
                    }
                }
                Op::AddRow(x, bias) => {
                    let cols = val(*bias).len();
                    if needs(*x) {
                        let d = Self::acc(&mut grads, *x, g.len());
                        for (a, b) in d.iter_mut().zip(&g) {
                            *a += b;
                        }
                    }
                    if needs(*bias) {
                        let d = Self::acc(&mut grads, *bias, cols);
                        for row in g.chunks(cols) {
                            for (a, b) in d.iter_mut().zip(row) {
                                *a += b;
                            }
                        }
                    }
                }
                Op::Scale(x, s) => {
                    let d = Self::acc(&mut grads, *x, g.len());
                    for (a, b) in d.iter_mut().zip(&g) {
                        *a += s * b;
                    }
                }
                Op::Gelu(x) => {
                    let tx = val(*x);
                    let d = Self::acc(&mut grads, *x, g.len());
                    for ((a, b), xv) in d.iter_mut().zip(&g).zip(tx.values()) {
                        *a += b * gelu_grad(*xv);
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let tg = val(*gain);
                    let cols = tg.len();
                    if needs(*gain) {
                        let d = Self::acc(&mut grads, *gain, cols);
                        for (grow, hrow) in g.chunks(cols).zip(xhat.chunks(cols)) {
                            for j in 0..cols {
                                d[j] += grow[j] * hrow[j];
                            }
                        }
                    }
                    if needs(*bias) {
                        let d = Self::acc(&mut grads, *bias, cols);
                        for grow in g.chunks(cols) {
                            for j in 0..cols {
                                d[j] += grow[j];
                            }
                        }
                    }
                    if needs(*x) {
                        let d = Self::acc(&mut grads, *x, g.len());
                        let inv_n = 1.0 / cols as f64;
                        for (r, (grow, hrow)) in g.chunks(cols).zip(xhat.chunks(cols)).enumerate()
                        {
                            let mut mean_dh = 0.0;
                            let mut mean_dh_h = 0.0;
                            for j in 0..cols {
                                let dh = grow[j] * tg.values()[j];
                                mean_dh += dh;
                                mean_dh_h += dh * hrow[j];
                            }
                            mean_dh *= inv_n;
                            mean_dh_h *= inv_n;
                            let dr = &mut d[r * cols..(r + 1) * cols];
                            for j in 0..cols {
                                let dh = grow[j] * tg.values()[j];
                                dr[j] += rstd[r] * (dh - mean_dh - hrow[j] * mean_dh_h);
                            }
                        }
                    }
                }
                Op::MaskedSoftmax(x) => {
                    let y = &node.value;
                    let cols = y.cols();
                    let d = Self::acc(&mut grads, *x, g.len());
                    for ((drow, grow), yrow) in d
                        .chunks_mut(cols)
                        .zip(g.chunks(cols))
                        .zip(y.values().chunks(cols))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            drow[j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                }
                Op::Rope(x, table) => {
                    let cols = node.value.cols();
                    let mut back = g.clone();
                    table.rotate(&mut back, cols, true);
                    let d = Self::acc(&mut grads, *x, g.len());
                    for (a, b) in d.iter_mut().zip(&back) {
                        *a += b;
                    }
                }
                Op::SliceCols { x, start } => {
                    let src_cols = val(*x).cols();
                    let w = node.value.cols();
                    let d = Self::acc(&mut grads, *x, val(*x).len());
                    for (r, grow) in g.chunks(w).enumerate() {
                        let dst = &mut d[r * src_cols + start..r * src_cols + start + w];
                        for (a, b) in dst.iter_mut().zip(grow) {
                            *a += b;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = val(p).cols();
                        if needs(p) {
                            let d = Self::acc(&mut grads, p, val(p).len());
                            for (r, grow) in g.chunks(total).enumerate() {
                                for j in 0..w {
                                    d[r * w + j] += grow[offset + j];
                                }
                            }
                        }
                        offset += w;
                    }
                }
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Adds parameter gradients from the last `backward` into `out`.
    pub fn accumulate_param_grads(&self, out: &mut Grads) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(Some(g)) = self.grads.get(i) {
                    for (a, b) in out.get_mut(id).iter_mut().zip(g) {
                        *a += b;
                    }
                }
            }
        }
    }
}
