//! Dense row-major `f64` matrices and a small reverse-mode tape.
//!
//! The tape records every operation of one forward pass. `Tape::backward`
//! walks it in reverse and returns the gradient of a scalar node with respect
//! to every recorded node; parameter gradients are read off the leaves that
//! were created with [`Tape::param`].

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data does not match shape");
        Tensor { rows, cols, data }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_vec(1, 1, vec![value])
    }

    pub fn column(values: Vec<f64>) -> Self {
        let n = values.len();
        Tensor::from_vec(n, 1, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on a non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `self · other`
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Tensor::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.cols, "matmul_t shape mismatch");
        let mut out = Tensor::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        out
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rows, other.rows, "t_matmul shape mismatch");
        let mut out = Tensor::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log Σ exp(v)`; `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(values: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(values);
    values.iter().map(|v| (v - lse).exp()).collect()
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// One antecedent row for [`Tape::antecedent_nll`]: a contiguous range of the
/// flat pair-score column plus the positions (relative to the range start) of
/// the gold antecedents. An empty gold list means the dummy antecedent is gold.
#[derive(Clone, Debug)]
pub struct NllRow {
    pub offset: usize,
    pub len: usize,
    pub gold: Vec<usize>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Relu(Var),
    Tanh(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    GatherElems(Var, Vec<(usize, usize)>),
    WindowMean(Var, usize),
    SpanAttention {
        x: Var,
        scores: Var,
        spans: Vec<(usize, usize)>,
        weights: Vec<Vec<f64>>,
    },
    Sum(Var),
    AntecedentNll {
        scores: Var,
        rows: Vec<NllRow>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<Option<usize>>,
        probs: Tensor,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Leaf bound to parameter slot `index`; its gradient is reported by
    /// [`Gradients::param`].
    pub fn param(&mut self, index: usize, value: Tensor) -> Var {
        self.push(Op::Param(index), value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(Op::MatMulT(a, b), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    /// Adds the 1×c `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let av = self.value(a);
        let rv = self.value(row);
        assert_eq!(rv.rows(), 1, "add_row expects a single row");
        assert_eq!(av.cols(), rv.cols(), "add_row width mismatch");
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(rv.data()) {
                *o += b;
            }
        }
        self.push(Op::AddRow(a, row), out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    /// Multiplies every entry of `a` by the 1×1 node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let c = self.value(s).item();
        let v = self.value(a).map(|x| c * x);
        self.push(Op::ScaleBy(a, s), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for p in parts {
                let pv = self.value(*p);
                assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
                out.row_mut(r)[c0..c0 + pv.cols()].copy_from_slice(pv.row(r));
                c0 += pv.cols();
            }
        }
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Var {
        let av = self.value(a);
        let mut out = Tensor::zeros(index.len(), av.cols());
        for (r, &i) in index.iter().enumerate() {
            out.row_mut(r).copy_from_slice(av.row(i));
        }
        self.push(Op::GatherRows(a, index.to_vec()), out)
    }

    /// Column vector of the selected `(row, col)` entries.
    pub fn gather_elems(&mut self, a: Var, index: &[(usize, usize)]) -> Var {
        let av = self.value(a);
        let out = Tensor::column(index.iter().map(|&(r, c)| av.get(r, c)).collect());
        self.push(Op::GatherElems(a, index.to_vec()), out)
    }

    /// Row `t` of the result is the mean of rows `t-radius..=t+radius` of `a`
    /// (clipped to the matrix).
    pub fn window_mean(&mut self, a: Var, radius: usize) -> Var {
        let av = self.value(a);
        let n = av.rows();
        let mut out = Tensor::zeros(n, av.cols());
        for t in 0..n {
            let lo = t.saturating_sub(radius);
            let hi = (t + radius).min(n.saturating_sub(1));
            let count = (hi - lo + 1) as f64;
            let row = out.row_mut(t);
            for u in lo..=hi {
                for (o, x) in row.iter_mut().zip(av.row(u)) {
                    *o += x;
                }
            }
            row.iter_mut().for_each(|o| *o /= count);
        }
        self.push(Op::WindowMean(a, radius), out)
    }

    /// For each inclusive span `(s, e)`, the attention-weighted sum of rows
    /// `s..=e` of `x`, with weights `softmax(scores[s..=e])`. `scores` is a
    /// column with one entry per row of `x`.
    pub fn span_attention(&mut self, x: Var, scores: Var, spans: &[(usize, usize)]) -> Var {
        let xv = self.value(x);
        let sv = self.value(scores);
        assert_eq!(sv.cols(), 1, "attention scores must be a column");
        assert_eq!(sv.rows(), xv.rows(), "one attention score per token");
        let mut out = Tensor::zeros(spans.len(), xv.cols());
        let mut weights = Vec::with_capacity(spans.len());
        for (k, &(s, e)) in spans.iter().enumerate() {
            let alpha = softmax(&sv.data()[s..=e]);
            let row = out.row_mut(k);
            for (a, t) in alpha.iter().zip(s..=e) {
                for (o, xv) in row.iter_mut().zip(xv.row(t)) {
                    *o += a * xv;
                }
            }
            weights.push(alpha);
        }
        self.push(
            Op::SpanAttention {
                x,
                scores,
                spans: spans.to_vec(),
                weights,
            },
            out,
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    /// Marginal negative log-likelihood of the gold antecedents, summed over
    /// rows. Every row carries an implicit dummy entry fixed at score 0.
    pub fn antecedent_nll(&mut self, scores: Var, rows: Vec<NllRow>) -> Var {
        let sv = self.value(scores);
        assert_eq!(sv.cols(), 1, "pair scores must be a column");
        let mut total = 0.0;
        let mut full = Vec::new();
        let mut gold = Vec::new();
        for row in &rows {
            let slice = &sv.data()[row.offset..row.offset + row.len];
            full.clear();
            full.push(0.0);
            full.extend_from_slice(slice);
            gold.clear();
            if row.gold.is_empty() {
                gold.push(0.0);
            } else {
                gold.extend(row.gold.iter().map(|&g| slice[g]));
            }
            total += log_sum_exp(&full) - log_sum_exp(&gold);
        }
        self.push(Op::AntecedentNll { scores, rows }, Tensor::scalar(total))
    }

    /// Mean softmax cross-entropy over rows with a label; 0 when none has one.
    pub fn cross_entropy(&mut self, logits: Var, labels: Vec<Option<usize>>) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), labels.len(), "one label slot per logit row");
        let mut probs = Tensor::zeros(lv.rows(), lv.cols());
        let mut total = 0.0;
        let mut count = 0usize;
        for (r, label) in labels.iter().enumerate() {
            let row = lv.row(r);
            let lse = log_sum_exp(row);
            for (p, x) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (x - lse).exp();
            }
            if let Some(y) = *label {
                total += lse - row[y];
                count += 1;
            }
        }
        let loss = if count == 0 {
            0.0
        } else {
            total / count as f64
        };
        self.push(
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            },
            Tensor::scalar(loss),
        )
    }

    /// Gradients of the scalar node `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(
            self.value(root).shape(),
            (1, 1),
            "backward from a non-scalar"
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param(_) => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulT(a, b) => {
                    let da = g.matmul(self.value(*b));
                    let db = g.t_matmul(self.value(*a));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRow(a, row) => {
                    let mut dr = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, x) in dr.data_mut().iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *row, dr);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, g.map(|x| c * x));
                }
                Op::ScaleBy(a, s) => {
                    let c = self.value(*s).item();
                    let ds = dot(g.data(), self.value(*a).data());
                    accumulate(&mut grads, *a, g.map(|x| c * x));
                    accumulate(&mut grads, *s, Tensor::scalar(ds));
                }
                Op::Relu(a) => {
                    let da = g.zip_map(self.value(*a), |x, y| if y > 0.0 { x } else { 0.0 });
                    accumulate(&mut grads, *a, da);
                }
                Op::Tanh(a) => {
                    let da = g.zip_map(&node.value, |x, y| x * (1.0 - y * y));
                    accumulate(&mut grads, *a, da);
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let mut dp = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + w]);
                        }
                        c0 += w;
                        accumulate(&mut grads, *p, dp);
                    }
                }
                Op::GatherRows(a, index) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut da = Tensor::zeros(rows, cols);
                    for (r, &i) in index.iter().enumerate() {
                        for (d, x) in da.row_mut(i).iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::GatherElems(a, index) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut da = Tensor::zeros(rows, cols);
                    for (k, &(r, c)) in index.iter().enumerate() {
                        let cur = da.get(r, c);
                        da.set(r, c, cur + g.data()[k]);
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::WindowMean(a, radius) => {
                    let n = g.rows();
                    let mut da = Tensor::zeros(n, g.cols());
                    for t in 0..n {
                        let lo = t.saturating_sub(*radius);
                        let hi = (t + radius).min(n - 1);
                        let count = (hi - lo + 1) as f64;
                        for u in lo..=hi {
                            for (d, x) in da.row_mut(u).iter_mut().zip(g.row(t)) {
                                *d += x / count;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::SpanAttention {
                    x,
                    scores,
                    spans,
                    weights,
                } => {
                    let xv = self.value(*x);
                    let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                    let mut ds = Tensor::zeros(xv.rows(), 1);
                    for (k, (&(s, e), alpha)) in spans.iter().zip(weights).enumerate() {
                        let gk = g.row(k);
                        let dalpha: Vec<f64> = (s..=e).map(|t| dot(gk, xv.row(t))).collect();
                        let mean: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
                        for (i, t) in (s..=e).enumerate() {
                            for (d, gv) in dx.row_mut(t).iter_mut().zip(gk) {
                                *d += alpha[i] * gv;
                            }
                            let cur = ds.get(t, 0);
                            ds.set(t, 0, cur + alpha[i] * (dalpha[i] - mean));
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *scores, ds);
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.value(*a).shape();
                    let gv = g.item();
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor::from_vec(rows, cols, vec![gv; rows * cols]),
                    );
                }
                Op::AntecedentNll { scores, rows } => {
                    let sv = self.value(*scores);
                    let gv = g.item();
                    let mut ds = Tensor::zeros(sv.rows(), 1);
                    for row in rows {
                        let slice = &sv.data()[row.offset..row.offset + row.len];
                        let mut full = Vec::with_capacity(row.len + 1);
                        full.push(0.0);
                        full.extend_from_slice(slice);
                        let p = softmax(&full);
                        let mut q = vec![0.0; row.len];
                        if !row.gold.is_empty() {
                            let gold: Vec<f64> = row.gold.iter().map(|&i| slice[i]).collect();
                            for (&i, w) in row.gold.iter().zip(softmax(&gold)) {
                                q[i] += w;
                            }
                        }
                        for k in 0..row.len {
                            ds.data_mut()[row.offset + k] += gv * (p[k + 1] - q[k]);
                        }
                    }
                    accumulate(&mut grads, *scores, ds);
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let count = labels.iter().filter(|l| l.is_some()).count();
                    let mut dl = Tensor::zeros(probs.rows(), probs.cols());
                    if count > 0 {
                        let w = g.item() / count as f64;
                        for (r, label) in labels.iter().enumerate() {
                            if let Some(y) = *label {
                                for (d, p) in dl.row_mut(r).iter_mut().zip(probs.row(r)) {
                                    *d = w * p;
                                }
                                dl.row_mut(r)[y] -= w;
                            }
                        }
                    }
                    accumulate(&mut grads, *logits, dl);
                }
            }
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(p) => Some((p, i)),
                _ => None,
            })
            .collect();
        Gradients { grads, params }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for parameter slot `index`, summed over every leaf bound to
    /// it. `None` when the parameter did not take part in the loss.
    pub fn param(&self, index: usize) -> Option<Tensor> {
        let mut out: Option<Tensor> = None;
        for &(p, node) in &self.params {
            if p != index {
                continue;
            }
            if let Some(g) = &self.grads[node] {
                match &mut out {
                    Some(acc) => acc.add_assign(g),
                    None => out = Some(g.clone()),
                }
            }
        }
        out
    }
}
