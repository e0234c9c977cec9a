//! Minimal reverse-mode differentiation over dense row-major `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! leaves that read straight from a borrowed [`Params`] store; constants are
//! leaves that never receive gradient. [`Tape::backward`] takes seed
//! gradients for any set of output nodes, so a loss computed outside the tape
//! (with hand-derived output gradients) can be chained through it.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Matrix::from_vec(1, 1, vec![v])
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Rows reordered so that output row `i` is input row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(perm.len(), self.cols);
        for (i, &p) in perm.iter().enumerate() {
            out.data[i * self.cols..(i + 1) * self.cols].copy_from_slice(self.row(p));
        }
        out
    }
}

/// `c = alpha * op(a) * op(b) + beta * c`, with `op` an optional transpose.
fn gemm(alpha: f64, a: &Matrix, ta: bool, b: &Matrix, tb: bool, beta: f64, c: &mut Matrix) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!((c.rows, c.cols), (m, n), "output shape mismatch");
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.data.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: strides and extents describe the owned buffers exactly; `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut c = Matrix::zeros(a.rows, b.cols);
    gemm(1.0, a, false, b, false, 0.0, &mut c);
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub trainable: bool,
}

/// Named parameter tensors with an explicit frozen/trainable partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub specs: Vec<ParamSpec>,
    pub values: Vec<Matrix>,
}

pub type ParamId = usize;

impl Params {
    pub fn new() -> Self {
        Params {
            specs: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix, trainable: bool) -> ParamId {
        self.specs.push(ParamSpec {
            name: name.into(),
            rows: value.rows,
            cols: value.cols,
            trainable,
        });
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.specs.iter().enumerate().filter(|(_, s)| s.trainable).map(|(i, _)| i)
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable_ids().map(|i| self.values[i].data.len()).sum()
    }

    pub fn zeros_like(&self) -> Gradients {
        Gradients {
            values: self.values.iter().map(|m| Matrix::zeros(m.rows, m.cols)).collect(),
        }
    }
}

impl Default for Params {
    fn default() -> Self {
        Params::new()
    }
}

/// Gradient buffers aligned with a [`Params`] store. Frozen entries stay zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub values: Vec<Matrix>,
}

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in &mut self.values {
            m.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.values.iter().map(Matrix::sq_norm).sum::<f64>().sqrt()
    }
}

pub type Var = usize;

#[derive(Clone, Debug)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    AddScalar(Var, Var),
    Mul(Var, Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Matrix, rstd: Vec<f64> },
    SoftmaxRows(Var),
    Gelu(Var),
    Sigmoid(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
}

struct Node {
    value: Matrix,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p Params,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const LN_EPS: f64 = 1e-5;

impl<'p> Tape<'p> {
    pub fn new(params: &'p Params) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p Params {
        self.params
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, v: Var) -> &Matrix {
        match self.nodes[v].op {
            Op::Param(id) => &self.params.values[id],
            _ => &self.nodes[v].value,
        }
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Const)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id] {
            return v;
        }
        let v = self.push(Matrix::zeros(0, 0), Op::Param(id));
        self.param_vars[id] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = matmul(self.value(a), self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (am, bm) = (self.value(a), self.value(b));
        let mut out = Matrix::zeros(am.rows, bm.rows);
        gemm(1.0, am, false, bm, true, 0.0, &mut out);
        self.push(out, Op::MatMulNT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Add a `1 x cols` row vector to every row.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let mut out = self.value(x).clone();
        let bias = self.value(b);
        assert_eq!((bias.rows, bias.cols), (1, out.cols), "bias shape");
        for row in out.data.chunks_exact_mut(bias.cols) {
            for (o, b) in row.iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(x, b))
    }

    /// `x @ w + b`
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        self.push(out, Op::Scale(x, s))
    }

    /// Multiply by a `1 x 1` node.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Var {
        let k = self.value(s).data[0];
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v *= k);
        self.push(out, Op::MulScalar(x, s))
    }

    /// Add a `1 x 1` node to every entry.
    pub fn add_scalar(&mut self, x: Var, s: Var) -> Var {
        let k = self.value(s).data[0];
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v += k);
        self.push(out, Op::AddScalar(x, s))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        for (o, b) in out.data.iter_mut().zip(&self.value(b).data) {
            *o *= b;
        }
        self.push(out, Op::Mul(a, b))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xm = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        let n = xm.cols;
        let mut xhat = Matrix::zeros(xm.rows, n);
        let mut out = Matrix::zeros(xm.rows, n);
        let mut rstd = Vec::with_capacity(xm.rows);
        for r in 0..xm.rows {
            let row = xm.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd.push(rs);
            for c in 0..n {
                let h = (row[c] - mean) * rs;
                xhat.data[r * n + c] = h;
                out.data[r * n + c] = h * g.data[c] + b.data[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, rstd })
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        let cols = out.cols;
        for row in out.data.chunks_exact_mut(cols.max(1)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        self.push(out, Op::SoftmaxRows(x))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data.iter_mut() {
            let u = GELU_C * (*v + 0.044715 * *v * *v * *v);
            *v = 0.5 * *v * (1.0 + u.tanh());
        }
        self.push(out, Op::Gelu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        self.push(out, Op::Sigmoid(x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xm = self.value(x);
        assert!(start + len <= xm.cols, "column slice out of range");
        let mut out = Matrix::zeros(xm.rows, len);
        for r in 0..xm.rows {
            out.data[r * len..(r + 1) * len].copy_from_slice(&xm.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(x, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pm = self.value(p);
            assert_eq!(pm.rows, rows, "concat row mismatch");
            for r in 0..rows {
                out.data[r * cols + offset..r * cols + offset + pm.cols].copy_from_slice(pm.row(r));
            }
            offset += pm.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Propagate `seeds` (output gradients) back to every parameter, accumulating
    /// into `grads`. Frozen parameters are skipped.
    pub fn backward(&self, seeds: &[(Var, Matrix)], grads: &mut Gradients) {
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            accumulate(&mut adj, *v, g.clone());
        }
        for v in (0..self.nodes.len()).rev() {
            let Some(g) = adj[v].take() else { continue };
            match &self.nodes[v].op {
                Op::Const => {}
                Op::Param(id) => {
                    if self.params.specs[*id].trainable {
                        grads.values[*id].add_assign(&g);
                    }
                }
                Op::MatMul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    let mut da = Matrix::zeros(am.rows, am.cols);
                    gemm(1.0, &g, false, bm, true, 0.0, &mut da);
                    let mut db = Matrix::zeros(bm.rows, bm.cols);
                    gemm(1.0, am, true, &g, false, 0.0, &mut db);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::MatMulNT(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    let mut da = Matrix::zeros(am.rows, am.cols);
                    gemm(1.0, &g, false, bm, false, 0.0, &mut da);
                    let mut db = Matrix::zeros(bm.rows, bm.cols);
                    gemm(1.0, &g, true, am, false, 0.0, &mut db);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::AddRow(x, b) => {
                    let mut db = Matrix::zeros(1, g.cols);
                    for row in g.data.chunks_exact(g.cols) {
                        for (d, v) in db.data.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(&mut adj, *x, g);
                    accumulate(&mut adj, *b, db);
                }
                Op::Scale(x, s) => {
                    let mut dx = g;
                    dx.data.iter_mut().for_each(|v| *v *= s);
                    accumulate(&mut adj, *x, dx);
                }
                Op::MulScalar(x, s) => {
                    let k = self.value(*s).data[0];
                    let xm = self.value(*x);
                    let ds: f64 = g.data.iter().zip(&xm.data).map(|(a, b)| a * b).sum();
                    let mut dx = g;
                    dx.data.iter_mut().for_each(|v| *v *= k);
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *s, Matrix::scalar(ds));
                }
                Op::AddScalar(x, s) => {
                    let ds: f64 = g.data.iter().sum();
                    accumulate(&mut adj, *x, g);
                    accumulate(&mut adj, *s, Matrix::scalar(ds));
                }
                Op::Mul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    let mut da = g.clone();
                    for (d, v) in da.data.iter_mut().zip(&bm.data) {
                        *d *= v;
                    }
                    let mut db = g;
                    for (d, v) in db.data.iter_mut().zip(&am.data) {
                        *d *= v;
                    }
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                    let gm = self.value(*gain);
                    let n = g.cols;
                    let mut dgain = Matrix::zeros(1, n);
                    let mut dbias = Matrix::zeros(1, n);
                    let mut dx = Matrix::zeros(g.rows, n);
                    let mut dh = vec![0.0; n];
                    for r in 0..g.rows {
                        let gr = g.row(r);
                        let hr = xhat.row(r);
                        let (mut sum_dh, mut sum_dh_h) = (0.0, 0.0);
                        for c in 0..n {
                            dgain.data[c] += gr[c] * hr[c];
                            dbias.data[c] += gr[c];
                            dh[c] = gr[c] * gm.data[c];
                            sum_dh += dh[c];
                            sum_dh_h += dh[c] * hr[c];
                        }
                        let scale = rstd[r] / n as f64;
                        for c in 0..n {
                            dx.data[r * n + c] = scale * (n as f64 * dh[c] - sum_dh - hr[c] * sum_dh_h);
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *gain, dgain);
                    accumulate(&mut adj, *bias, dbias);
                }
                Op::SoftmaxRows(x) => {
                    let y = &self.nodes[v].value;
                    let mut dx = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..y.cols {
                            dx.data[r * y.cols + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::Gelu(x) => {
                    let xm = self.value(*x);
                    let mut dx = g;
                    for (d, &z) in dx.data.iter_mut().zip(&xm.data) {
                        let u = GELU_C * (z + 0.044715 * z * z * z);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * z * z);
                        *d *= 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * du;
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let y = &self.nodes[v].value;
                    let mut dx = g;
                    for (d, s) in dx.data.iter_mut().zip(&y.data) {
                        *d *= s * (1.0 - s);
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::SliceCols(x, start) => {
                    let xm = self.value(*x);
                    let mut dx = Matrix::zeros(xm.rows, xm.cols);
                    for r in 0..g.rows {
                        dx.data[r * xm.cols + start..r * xm.cols + start + g.cols].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).cols;
                        let mut dp = Matrix::zeros(g.rows, pc);
                        for r in 0..g.rows {
                            dp.data[r * pc..(r + 1) * pc].copy_from_slice(&g.row(r)[offset..offset + pc]);
                        }
                        offset += pc;
                        accumulate(&mut adj, p, dp);
                    }
                }
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut adj[v] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
