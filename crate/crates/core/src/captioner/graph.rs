//! Tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! Every value is a 2-D matrix (row vectors are `1 × n`, scalars `1 × 1`).
//! A [`Graph`] records one forward pass; [`Graph::backward`] walks the tape
//! in reverse and returns gradients for the parameters that were used.

use std::collections::{BTreeMap, HashMap};

use ndarray::{s, Array2, Axis};

use super::params::{ParamId, ParamStore};

pub type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Constant sparse patch matrix: only rows that contain a non-black pixel
/// are stored.
#[derive(Debug, Clone)]
pub struct SparseRows {
    pub n_rows: usize,
    pub rows: Vec<usize>,
    pub data: Mat,
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    Exp(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Mat, inv_std: Vec<f64> },
    Embedding { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Mat, count: usize },
    L2NormRows { x: Var, norms: Vec<f64> },
    SparseMatMul { patches: SparseRows, w: Var },
}

struct Node {
    value: Mat,
    op: Op,
    requires_grad: bool,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

/// Gradients of one backward pass, keyed by parameter.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Mat>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Mat)> {
        self.grads.iter().map(|(&k, v)| (k, v))
    }

    pub fn insert(&mut self, id: ParamId, grad: Mat) {
        self.grads.insert(id, grad);
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.values().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.values_mut() {
            g.mapv_inplace(|v| v * factor);
        }
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(1024),
            param_vars: HashMap::new(),
        }
    }

    fn push(&mut self, value: Mat, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Mat::zeros((rows, cols)))
    }

    /// The node for a stored parameter; one node per parameter per graph.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let entry = self.params.entry(id);
        let v = self.push(entry.value.clone(), Op::Param(id), !entry.frozen);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMulT(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    /// Adds the `1 × n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(b).0, 1);
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::AddRow(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) * k;
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, k), rg)
    }

    /// Multiplies `a` by the `1 × 1` value `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar(s);
        let value = self.value(a) * k;
        let rg = self.rg(a) || self.rg(s);
        self.push(value, Op::ScaleBy(a, s), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .mapv(|x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()));
        let rg = self.rg(a);
        self.push(value, Op::Gelu(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::exp);
        let rg = self.rg(a);
        self.push(value, Op::Exp(a), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        let rg = self.rg(a);
        self.push(value, Op::SliceCols(a, start), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![start..start + len, ..]).to_owned();
        let rg = self.rg(a);
        self.push(value, Op::SliceRows(a, start), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows widths agree");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols heights agree");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        let rg = self.rg(a);
        self.push(value, Op::MeanRows(a), rg)
    }

    /// Row-wise softmax; with `causal`, row `i` only sees columns
    /// `0..=i + offset` where `offset = cols - rows`.
    pub fn softmax_rows(&mut self, a: Var, causal: bool) -> Var {
        let x = self.value(a);
        let (rows, cols) = x.dim();
        let offset = cols.saturating_sub(rows);
        let mut value = Mat::zeros((rows, cols));
        for i in 0..rows {
            let visible = if causal { (i + offset + 1).min(cols) } else { cols };
            let row = x.slice(s![i, ..visible]);
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut sum = 0.0;
            for j in 0..visible {
                let e = (row[j] - m).exp();
                value[[i, j]] = e;
                sum += e;
            }
            for j in 0..visible {
                value[[i, j]] /= sum;
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a), rg)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        const EPS: f64 = 1e-5;
        let xv = self.value(x);
        let (rows, cols) = xv.dim();
        let mut xhat = Mat::zeros((rows, cols));
        let mut inv_std = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = xv.row(i);
            let mean = row.sum() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std.push(is);
            for j in 0..cols {
                xhat[[i, j]] = (row[j] - mean) * is;
            }
        }
        let value = &xhat * self.value(gamma) + self.value(beta);
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(value, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, rg)
    }

    /// Gathers rows `ids` of `table`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut value = Mat::zeros((ids.len(), t.ncols()));
        for (r, &id) in ids.iter().enumerate() {
            value.row_mut(r).assign(&t.row(id));
        }
        let rg = self.rg(table);
        self.push(value, Op::Embedding { table, ids: ids.to_vec() }, rg)
    }

    /// Mean negative log-likelihood over rows with a target; `1 × 1`.
    /// With no scored rows the loss is zero.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Var {
        let x = self.value(logits);
        assert_eq!(x.nrows(), targets.len(), "one target slot per row");
        let mut probs = Mat::zeros(x.dim());
        let mut total = 0.0;
        let mut count = 0;
        for (i, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            let row = x.row(i);
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let lse = m + sum.ln();
            total += lse - row[t];
            for j in 0..row.len() {
                probs[[i, j]] = (row[j] - lse).exp();
            }
            count += 1;
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        let rg = self.rg(logits);
        self.push(
            Mat::from_elem((1, 1), loss),
            Op::CrossEntropy { logits, targets: targets.to_vec(), probs, count },
            rg,
        )
    }

    /// Normalizes each row to unit L2 norm. Rows must be non-zero.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let norms: Vec<f64> = xv.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        let mut value = xv.clone();
        for (mut row, &n) in value.rows_mut().into_iter().zip(&norms) {
            row.mapv_inplace(|v| v / n);
        }
        let rg = self.rg(x);
        self.push(value, Op::L2NormRows { x, norms }, rg)
    }

    /// `P · w` for a constant sparse `P`; absent rows produce zeros.
    pub fn sparse_matmul(&mut self, patches: SparseRows, w: Var) -> Var {
        let wv = self.value(w);
        let mut value = Mat::zeros((patches.n_rows, wv.ncols()));
        if !patches.rows.is_empty() {
            let dense = patches.data.dot(wv);
            for (k, &r) in patches.rows.iter().enumerate() {
                value.row_mut(r).assign(&dense.row(k));
            }
        }
        let rg = self.rg(w);
        self.push(value, Op::SparseMatMul { patches, w }, rg)
    }

    /// Reverse sweep from a `1 × 1` output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar");
        let n = output.0 + 1;
        let mut grads: Vec<Option<Mat>> = (0..n).map(|_| None).collect();
        grads[output.0] = Some(Mat::ones((1, 1)));
        let mut out = Gradients::default();

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let acc = |v: Var, delta: Mat, grads: &mut Vec<Option<Mat>>| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => *existing += &delta,
                    slot => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    out.grads.insert(*id, g);
                }
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        acc(*a, g.dot(&self.value(*b).t()), &mut grads);
                    }
                    if self.rg(*b) {
                        acc(*b, self.value(*a).t().dot(&g), &mut grads);
                    }
                }
                Op::MatMulT(a, b) => {
                    if self.rg(*a) {
                        acc(*a, g.dot(self.value(*b)), &mut grads);
                    }
                    if self.rg(*b) {
                        acc(*b, g.t().dot(self.value(*a)), &mut grads);
                    }
                }
                Op::Transpose(a) => acc(*a, g.t().to_owned(), &mut grads),
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g, &mut grads);
                }
                Op::AddRow(a, b) => {
                    acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)), &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    acc(*a, &g * self.value(*b), &mut grads);
                    acc(*b, &g * self.value(*a), &mut grads);
                }
                Op::Scale(a, k) => acc(*a, g * *k, &mut grads),
                Op::ScaleBy(a, s) => {
                    let k = self.scalar(*s);
                    if self.rg(*s) {
                        let ds = (&g * self.value(*a)).sum();
                        acc(*s, Mat::from_elem((1, 1), ds), &mut grads);
                    }
                    acc(*a, g * k, &mut grads);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(*a, &g * &y.mapv(|t| 1.0 - t * t), &mut grads);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(*a, &g * &y.mapv(|s| s * (1.0 - s)), &mut grads);
                }
                Op::Gelu(a) => {
                    let d = self.value(*a).mapv(|x| {
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
                    });
                    acc(*a, g * d, &mut grads);
                }
                Op::Exp(a) => acc(*a, &g * &node.value, &mut grads),
                Op::SliceCols(a, start) => {
                    let mut full = Mat::zeros(self.value(*a).dim());
                    full.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(*a, full, &mut grads);
                }
                Op::SliceRows(a, start) => {
                    let mut full = Mat::zeros(self.value(*a).dim());
                    full.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    acc(*a, full, &mut grads);
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let rows = self.value(p).nrows();
                        if self.rg(p) {
                            acc(p, g.slice(s![at..at + rows, ..]).to_owned(), &mut grads);
                        }
                        at += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let cols = self.value(p).ncols();
                        if self.rg(p) {
                            acc(p, g.slice(s![.., at..at + cols]).to_owned(), &mut grads);
                        }
                        at += cols;
                    }
                }
                Op::MeanRows(a) => {
                    let rows = self.value(*a).nrows();
                    let spread = g.broadcast(self.value(*a).dim()).expect("row broadcast").to_owned() / rows as f64;
                    acc(*a, spread, &mut grads);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let gy = &g * y;
                    let dot = gy.sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(*a, gy - y * &dot, &mut grads);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gamma_v = self.value(*gamma);
                    if self.rg(*gamma) {
                        acc(*gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)), &mut grads);
                    }
                    if self.rg(*beta) {
                        acc(*beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)), &mut grads);
                    }
                    if self.rg(*x) {
                        let dxhat = &g * gamma_v;
                        let cols = dxhat.ncols() as f64;
                        let mut dx = Mat::zeros(dxhat.dim());
                        for i in 0..dxhat.nrows() {
                            let dr = dxhat.row(i);
                            let xr = xhat.row(i);
                            let sum_d = dr.sum();
                            let sum_dx = dr.dot(&xr);
                            for j in 0..dr.len() {
                                dx[[i, j]] = inv_std[i] / cols * (cols * dr[j] - sum_d - xr[j] * sum_dx);
                            }
                        }
                        acc(*x, dx, &mut grads);
                    }
                }
                Op::Embedding { table, ids } => {
                    let mut dt = Mat::zeros(self.value(*table).dim());
                    for (r, &id) in ids.iter().enumerate() {
                        let mut row = dt.row_mut(id);
                        row += &g.row(r);
                    }
                    acc(*table, dt, &mut grads);
                }
                Op::CrossEntropy { logits, targets, probs, count } => {
                    if *count > 0 {
                        let upstream = g[[0, 0]] / *count as f64;
                        let mut d = probs.clone();
                        for (i, t) in targets.iter().enumerate() {
                            match t {
                                Some(t) => d[[i, *t]] -= 1.0,
                                None => d.row_mut(i).fill(0.0),
                            }
                        }
                        acc(*logits, d * upstream, &mut grads);
                    }
                }
                Op::L2NormRows { x, norms } => {
                    let y = &node.value;
                    let mut dx = Mat::zeros(y.dim());
                    for i in 0..y.nrows() {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let dot = gr.dot(&yr);
                        for j in 0..yr.len() {
                            dx[[i, j]] = (gr[j] - yr[j] * dot) / norms[i];
                        }
                    }
                    acc(*x, dx, &mut grads);
                }
                Op::SparseMatMul { patches, w } => {
                    if !patches.rows.is_empty() {
                        let mut gy = Mat::zeros((patches.rows.len(), g.ncols()));
                        for (k, &r) in patches.rows.iter().enumerate() {
                            gy.row_mut(k).assign(&g.row(r));
                        }
                        acc(*w, patches.data.t().dot(&gy), &mut grads);
                    }
                }
            }
        }
        out
    }
}
