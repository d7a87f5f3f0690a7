use std::collections::HashMap;

use super::tensor::{gemm, View};
use super::{shape_err, NnError, ParamStore, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Concat(Vec<usize>),
    Slice { x: usize, col0: usize },
    Gather { x: usize, idx: Vec<usize> },
    Softmax(usize),
    LayerNorm { x: usize, g: usize, b: usize, xhat: Vec<f64>, rstd: Vec<f64> },
    Gelu(usize),
    Attention { q: usize, k: usize, v: usize, heads: usize, probs: Vec<f64> },
    Interp { x: usize, idx: Vec<[usize; 3]>, w: Vec<[f64; 3]> },
    Sum(usize),
    L1 { pred: usize, target: usize },
    CrossEntropy { logits: usize, labels: Vec<usize>, probs: Vec<f64> },
}

/// Tape of recorded operations. Nodes are appended in evaluation order, so
/// every input precedes its consumers and backward is a reverse sweep.
#[derive(Debug, Default)]
pub struct Graph {
    values: Vec<Tensor>,
    grads: Vec<Option<Vec<f64>>>,
    needs_grad: Vec<bool>,
    ops: Vec<Op>,
    params: HashMap<(u64, usize), Var>,
}

fn softmax_rows(data: &mut [f64], cols: usize) {
    for row in data.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

/// `dx = y ⊙ (dy − ⟨dy, y⟩_row)`, written into `dy`.
fn softmax_backward_rows(y: &[f64], dy: &mut [f64], cols: usize) {
    for (yr, dr) in y.chunks(cols).zip(dy.chunks_mut(cols)) {
        let dot: f64 = yr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
        for (d, &yv) in dr.iter_mut().zip(yr) {
            *d = yv * (*d - dot);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.values.push(value);
        self.grads.push(None);
        self.needs_grad.push(needs_grad);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    fn any_needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.needs_grad[i])
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf that accumulates a gradient.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Records parameter `name` once per graph. Frozen parameters enter as constants.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, NnError> {
        let idx = store.index(name).ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        let key = (store.id(), idx);
        if let Some(&v) = self.params.get(&key) {
            return Ok(v);
        }
        let p = &store.params()[idx];
        let v = self.push(p.value.clone(), Op::Leaf, !p.frozen);
        self.params.insert(key, v);
        Ok(v)
    }

    /// `(param index, node)` for every parameter of one store recorded on this graph.
    pub(crate) fn param_nodes(&self, store_id: u64) -> impl Iterator<Item = (usize, Var)> + '_ {
        self.params
            .iter()
            .filter(move |((s, _), _)| *s == store_id)
            .map(|(&(_, i), &v)| (i, v))
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.values[v.0];
        (t.rows, t.cols)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let ((m, k), (k2, n)) = (self.dims(a), self.dims(b));
        if k != k2 {
            return Err(shape_err("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let mut out = Tensor::zeros(m, n);
        gemm(m, k, n, 1.0, View::rows(&self.values[a.0].data, k), View::rows(&self.values[b.0].data, n), 0.0, &mut out.data, 0, n);
        let needs = self.any_needs(&[a.0, b.0]);
        Ok(self.push(out, Op::MatMul(a.0, b.0), needs))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let ((m, k), (n, k2)) = (self.dims(a), self.dims(b));
        if k != k2 {
            return Err(shape_err("matmul_nt", format!("{m}x{k} · ({n}x{k2})ᵀ")));
        }
        let mut out = Tensor::zeros(m, n);
        gemm(m, k, n, 1.0, View::rows(&self.values[a.0].data, k), View::t(&self.values[b.0].data, k), 0.0, &mut out.data, 0, n);
        let needs = self.any_needs(&[a.0, b.0]);
        Ok(self.push(out, Op::MatMulNt(a.0, b.0), needs))
    }

    fn zip_same(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, NnError> {
        if self.dims(a) != self.dims(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.dims(a), self.dims(b))));
        }
        let (x, y) = (&self.values[a.0], &self.values[b.0]);
        let data = x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect();
        Ok(Tensor { rows: x.rows, cols: x.cols, data })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let out = self.zip_same(a, b, "add", |p, q| p + q)?;
        let needs = self.any_needs(&[a.0, b.0]);
        Ok(self.push(out, Op::Add(a.0, b.0), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let out = self.zip_same(a, b, "mul", |p, q| p * q)?;
        let needs = self.any_needs(&[a.0, b.0]);
        Ok(self.push(out, Op::Mul(a.0, b.0), needs))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        let ((m, n), (one, n2)) = (self.dims(a), self.dims(row));
        if one != 1 || n != n2 {
            return Err(shape_err("add_row", format!("{m}x{n} + {one}x{n2}")));
        }
        let r = &self.values[row.0].data;
        let mut out = self.values[a.0].clone();
        for chunk in out.data.chunks_mut(n) {
            chunk.iter_mut().zip(r).for_each(|(o, b)| *o += b);
        }
        let needs = self.any_needs(&[a.0, row.0]);
        Ok(self.push(out, Op::AddRow(a.0, row.0), needs))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.values[a.0].clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        let needs = self.needs_grad[a.0];
        self.push(out, Op::Scale(a.0, s), needs)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = parts.first().map(|&p| self.dims(p).0).unwrap_or(0);
        if parts.iter().any(|&p| self.dims(p).0 != rows) {
            return Err(shape_err("concat_cols", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = r * cols;
            for &p in parts {
                let row = self.values[p.0].row(r);
                out.data[c0..c0 + row.len()].copy_from_slice(row);
                c0 += row.len();
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let needs = self.any_needs(&ids);
        Ok(self.push(out, Op::Concat(ids), needs))
    }

    pub fn slice_cols(&mut self, a: Var, col0: usize, len: usize) -> Result<Var, NnError> {
        let (m, n) = self.dims(a);
        if col0 + len > n {
            return Err(shape_err("slice_cols", format!("[{col0}, {}) of {n} columns", col0 + len)));
        }
        let x = &self.values[a.0];
        let data = (0..m).flat_map(|r| x.row(r)[col0..col0 + len].iter().copied()).collect();
        let needs = self.needs_grad[a.0];
        Ok(self.push(Tensor { rows: m, cols: len, data }, Op::Slice { x: a.0, col0 }, needs))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, NnError> {
        let (m, n) = self.dims(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(shape_err("gather_rows", format!("row {bad} of {m}")));
        }
        let x = &self.values[a.0];
        let data = idx.iter().flat_map(|&i| x.row(i).iter().copied()).collect();
        let needs = self.needs_grad[a.0];
        Ok(self.push(
            Tensor { rows: idx.len(), cols: n, data },
            Op::Gather { x: a.0, idx: idx.to_vec() },
            needs,
        ))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.values[a.0].clone();
        softmax_rows(&mut out.data, out.cols);
        let needs = self.needs_grad[a.0];
        self.push(out, Op::Softmax(a.0), needs)
    }

    /// Row-wise normalization to zero mean and unit variance, then `· g + b`.
    pub fn layer_norm(&mut self, x: Var, g: Var, b: Var) -> Result<Var, NnError> {
        let (m, n) = self.dims(x);
        if self.dims(g) != (1, n) || self.dims(b) != (1, n) {
            return Err(shape_err("layer_norm", format!("affine must be 1x{n}")));
        }
        let xs = &self.values[x.0].data;
        let (gs, bs) = (&self.values[g.0].data, &self.values[b.0].data);
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let mut out = Tensor::zeros(m, n);
        for r in 0..m {
            let row = &xs[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            rstd[r] = 1.0 / (var + LN_EPS).sqrt();
            for c in 0..n {
                let h = (row[c] - mean) * rstd[r];
                xhat[r * n + c] = h;
                out.data[r * n + c] = h * gs[c] + bs[c];
            }
        }
        let needs = self.any_needs(&[x.0, g.0, b.0]);
        Ok(self.push(out, Op::LayerNorm { x: x.0, g: g.0, b: b.0, xhat, rstd }, needs))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let mut out = self.values[a.0].clone();
        out.data.iter_mut().for_each(|v| *v = gelu(*v));
        let needs = self.needs_grad[a.0];
        self.push(out, Op::Gelu(a.0), needs)
    }

    /// `x · w + b` with `w` of shape `in × out` and `b` of shape `1 × out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    /// Scaled dot-product attention over `heads` column blocks:
    /// `softmax(Q_h K_hᵀ / √d) V_h` concatenated over heads.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var, NnError> {
        let ((nq, c), (nk, ck), (nv, cv)) = (self.dims(q), self.dims(k), self.dims(v));
        if c != ck || c != cv || nk != nv || heads == 0 || c % heads != 0 {
            return Err(shape_err(
                "attention",
                format!("q {nq}x{c}, k {nk}x{ck}, v {nv}x{cv}, {heads} heads"),
            ));
        }
        let d = c / heads;
        let scale = 1.0 / (d as f64).sqrt();
        let (qd, kd, vd) = (&self.values[q.0].data, &self.values[k.0].data, &self.values[v.0].data);
        let mut probs = vec![0.0; heads * nq * nk];
        let mut out = Tensor::zeros(nq, c);
        for h in 0..heads {
            let p = &mut probs[h * nq * nk..(h + 1) * nq * nk];
            gemm(nq, d, nk, scale, View::cols(qd, c, h * d), View::cols_t(kd, c, h * d), 0.0, p, 0, nk);
            softmax_rows(p, nk);
            gemm(nq, nk, d, 1.0, View::rows(p, nk), View::cols(vd, c, h * d), 0.0, &mut out.data, h * d, c);
        }
        let needs = self.any_needs(&[q.0, k.0, v.0]);
        Ok(self.push(out, Op::Attention { q: q.0, k: k.0, v: v.0, heads, probs }, needs))
    }

    /// `out_i = Σ_j w_ij · x[idx_ij]` with fixed weights.
    pub fn interpolate(&mut self, x: Var, idx: Vec<[usize; 3]>, w: Vec<[f64; 3]>) -> Result<Var, NnError> {
        let (m, n) = self.dims(x);
        if idx.len() != w.len() || idx.iter().flatten().any(|&i| i >= m) {
            return Err(shape_err("interpolate", "indices out of range or weight count mismatch"));
        }
        let xs = &self.values[x.0];
        let mut out = Tensor::zeros(idx.len(), n);
        for (r, (ids, ws)) in idx.iter().zip(&w).enumerate() {
            let o = &mut out.data[r * n..(r + 1) * n];
            for (&i, &wt) in ids.iter().zip(ws) {
                o.iter_mut().zip(xs.row(i)).for_each(|(a, b)| *a += wt * b);
            }
        }
        let needs = self.needs_grad[x.0];
        Ok(self.push(out, Op::Interp { x: x.0, idx, w }, needs))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.values[a.0].data.iter().sum();
        let needs = self.needs_grad[a.0];
        self.push(Tensor::scalar(s), Op::Sum(a.0), needs)
    }

    /// Mean absolute error over all entries; the subgradient at 0 is 0.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var, NnError> {
        if self.dims(pred) != self.dims(target) {
            return Err(shape_err("l1_loss", format!("{:?} vs {:?}", self.dims(pred), self.dims(target))));
        }
        let (p, t) = (&self.values[pred.0].data, &self.values[target.0].data);
        let loss = p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len().max(1) as f64;
        let needs = self.any_needs(&[pred.0, target.0]);
        Ok(self.push(Tensor::scalar(loss), Op::L1 { pred: pred.0, target: target.0 }, needs))
    }

    /// Mean of `−log softmax(logits)[label]` over rows.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, NnError> {
        let (m, n) = self.dims(logits);
        if labels.len() != m {
            return Err(shape_err("cross_entropy", format!("{} labels for {m} rows", labels.len())));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= n) {
            return Err(NnError::BadLabel { row, label, classes: n });
        }
        let mut probs = self.values[logits.0].data.clone();
        softmax_rows(&mut probs, n);
        let x = &self.values[logits.0].data;
        let mut loss = 0.0;
        for (r, &l) in labels.iter().enumerate() {
            let row = &x[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[l];
        }
        loss /= m.max(1) as f64;
        let needs = self.needs_grad[logits.0];
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits: logits.0, labels: labels.to_vec(), probs },
            needs,
        ))
    }

    fn acc(&mut self, id: usize, g: Vec<f64>) {
        if !self.needs_grad[id] {
            return;
        }
        match &mut self.grads[id] {
            Some(existing) => existing.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot => *slot = Some(g),
        }
    }

    /// Reverse sweep from a `1 × 1` loss. Gradients from earlier sweeps are kept
    /// and accumulated into.
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        let (r, c) = self.dims(loss);
        if (r, c) != (1, 1) {
            return Err(NnError::NotScalar { rows: r, cols: c });
        }
        if !self.needs_grad[loss.0] {
            return Ok(());
        }
        self.acc(loss.0, vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.needs_grad[i] {
                continue;
            }
            let Some(gy) = self.grads[i].take() else { continue };
            self.backward_node(i, &gy);
            self.grads[i] = Some(gy);
        }
        Ok(())
    }

    fn backward_node(&mut self, i: usize, gy: &[f64]) {
        let op = std::mem::replace(&mut self.ops[i], Op::Leaf);
        let (rows, cols) = (self.values[i].rows, self.values[i].cols);
        match &op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (self.values[a].rows, self.values[a].cols);
                let n = cols;
                if self.needs_grad[a] {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, 1.0, View::rows(gy, n), View::t(&self.values[b].data, n), 0.0, &mut ga, 0, k);
                    self.acc(a, ga);
                }
                if self.needs_grad[b] {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, 1.0, View::t(&self.values[a].data, k), View::rows(gy, n), 0.0, &mut gb, 0, n);
                    self.acc(b, gb);
                }
            }
            &Op::MatMulNt(a, b) => {
                let (m, k) = (self.values[a].rows, self.values[a].cols);
                let n = cols;
                if self.needs_grad[a] {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, 1.0, View::rows(gy, n), View::rows(&self.values[b].data, k), 0.0, &mut ga, 0, k);
                    self.acc(a, ga);
                }
                if self.needs_grad[b] {
                    let mut gb = vec![0.0; n * k];
                    gemm(n, m, k, 1.0, View::t(gy, n), View::rows(&self.values[a].data, k), 0.0, &mut gb, 0, k);
                    self.acc(b, gb);
                }
            }
            &Op::Add(a, b) => {
                self.acc(a, gy.to_vec());
                self.acc(b, gy.to_vec());
            }
            &Op::AddRow(a, b) => {
                self.acc(a, gy.to_vec());
                let mut gb = vec![0.0; cols];
                for chunk in gy.chunks(cols) {
                    gb.iter_mut().zip(chunk).for_each(|(s, g)| *s += g);
                }
                self.acc(b, gb);
            }
            &Op::Mul(a, b) => {
                let ga = gy.iter().zip(&self.values[b].data).map(|(g, y)| g * y).collect();
                let gb = gy.iter().zip(&self.values[a].data).map(|(g, x)| g * x).collect();
                self.acc(a, ga);
                self.acc(b, gb);
            }
            &Op::Scale(a, s) => self.acc(a, gy.iter().map(|g| g * s).collect()),
            Op::Concat(ids) => {
                let mut c0 = 0;
                for &p in ids {
                    let w = self.values[p].cols;
                    let g = (0..rows).flat_map(|r| gy[r * cols + c0..r * cols + c0 + w].iter().copied()).collect();
                    self.acc(p, g);
                    c0 += w;
                }
            }
            &Op::Slice { x, col0 } => {
                let n = self.values[x].cols;
                let mut g = vec![0.0; rows * n];
                for r in 0..rows {
                    g[r * n + col0..r * n + col0 + cols].copy_from_slice(&gy[r * cols..(r + 1) * cols]);
                }
                self.acc(x, g);
            }
            Op::Gather { x, idx } => {
                let mut g = vec![0.0; self.values[*x].data.len()];
                for (r, &src) in idx.iter().enumerate() {
                    g[src * cols..(src + 1) * cols]
                        .iter_mut()
                        .zip(&gy[r * cols..(r + 1) * cols])
                        .for_each(|(a, b)| *a += b);
                }
                self.acc(*x, g);
            }
            &Op::Softmax(a) => {
                let mut g = gy.to_vec();
                softmax_backward_rows(&self.values[i].data, &mut g, cols);
                self.acc(a, g);
            }
            Op::LayerNorm { x, g, b, xhat, rstd } => {
                let gam = &self.values[*g].data;
                let n = cols;
                let mut gx = vec![0.0; rows * n];
                let mut gg = vec![0.0; n];
                let mut gb = vec![0.0; n];
                for r in 0..rows {
                    let dy = &gy[r * n..(r + 1) * n];
                    let xh = &xhat[r * n..(r + 1) * n];
                    let mut mean_d = 0.0;
                    let mut mean_dx = 0.0;
                    for c in 0..n {
                        let d = dy[c] * gam[c];
                        mean_d += d;
                        mean_dx += d * xh[c];
                        gg[c] += dy[c] * xh[c];
                        gb[c] += dy[c];
                    }
                    mean_d /= n as f64;
                    mean_dx /= n as f64;
                    for c in 0..n {
                        gx[r * n + c] = rstd[r] * (dy[c] * gam[c] - mean_d - xh[c] * mean_dx);
                    }
                }
                self.acc(*x, gx);
                self.acc(*g, gg);
                self.acc(*b, gb);
            }
            &Op::Gelu(a) => {
                let g = gy.iter().zip(&self.values[a].data).map(|(g, &x)| g * gelu_grad(x)).collect();
                self.acc(a, g);
            }
            Op::Attention { q, k, v, heads, probs } => {
                let (q, k, v, heads) = (*q, *k, *v, *heads);
                let (nq, nk, c) = (rows, self.values[k].rows, cols);
                let d = c / heads;
                let scale = 1.0 / (d as f64).sqrt();
                let (qd, kd, vd) = (&self.values[q].data, &self.values[k].data, &self.values[v].data);
                let mut gq = vec![0.0; nq * c];
                let mut gk = vec![0.0; nk * c];
                let mut gv = vec![0.0; nk * c];
                let mut dp = vec![0.0; nq * nk];
                for h in 0..heads {
                    let p = &probs[h * nq * nk..(h + 1) * nq * nk];
                    gemm(nq, d, nk, 1.0, View::cols(gy, c, h * d), View::cols_t(vd, c, h * d), 0.0, &mut dp, 0, nk);
                    gemm(nk, nq, d, 1.0, View::t(p, nk), View::cols(gy, c, h * d), 0.0, &mut gv, h * d, c);
                    softmax_backward_rows(p, &mut dp, nk);
                    gemm(nq, nk, d, scale, View::rows(&dp, nk), View::cols(kd, c, h * d), 0.0, &mut gq, h * d, c);
                    gemm(nk, nq, d, scale, View::t(&dp, nk), View::cols(qd, c, h * d), 0.0, &mut gk, h * d, c);
                }
                self.acc(q, gq);
                self.acc(k, gk);
                self.acc(v, gv);
            }
            Op::Interp { x, idx, w } => {
                let mut g = vec![0.0; self.values[*x].data.len()];
                for (r, (ids, ws)) in idx.iter().zip(w).enumerate() {
                    let src = &gy[r * cols..(r + 1) * cols];
                    for (&j, &wt) in ids.iter().zip(ws) {
                        g[j * cols..(j + 1) * cols].iter_mut().zip(src).for_each(|(a, b)| *a += wt * b);
                    }
                }
                self.acc(*x, g);
            }
            &Op::Sum(a) => {
                let len = self.values[a].data.len();
                self.acc(a, vec![gy[0]; len]);
            }
            &Op::L1 { pred, target } => {
                let (p, t) = (&self.values[pred].data, &self.values[target].data);
                let s = gy[0] / p.len().max(1) as f64;
                let g: Vec<f64> = p
                    .iter()
                    .zip(t)
                    .map(|(a, b)| match a.partial_cmp(b) {
                        Some(std::cmp::Ordering::Greater) => s,
                        Some(std::cmp::Ordering::Less) => -s,
                        _ => 0.0,
                    })
                    .collect();
                let neg = g.iter().map(|v| -v).collect();
                self.acc(pred, g);
                self.acc(target, neg);
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let n = self.values[*logits].cols;
                let s = gy[0] / labels.len().max(1) as f64;
                let mut g: Vec<f64> = probs.iter().map(|p| p * s).collect();
                for (r, &l) in labels.iter().enumerate() {
                    g[r * n + l] -= s;
                }
                self.acc(*logits, g);
            }
        }
        self.ops[i] = op;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(t(1, 2, &[0.0, 0.0]));
        let y = g.softmax(x);
        assert_eq!(g.value(y).data, vec![0.5, 0.5]);
    }

    #[test]
    fn layer_norm_standardizes() {
        let mut g = Graph::new();
        let x = g.constant(t(1, 3, &[1.0, 2.0, 3.0]));
        let gam = g.constant(t(1, 3, &[1.0; 3]));
        let b = g.constant(Tensor::zeros(1, 3));
        let y = g.layer_norm(x, gam, b).unwrap();
        let v = &g.value(y).data;
        let mean = v.iter().sum::<f64>() / 3.0;
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        // the epsilon keeps the variance just under 1
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn gather_identity_rows() {
        let mut g = Graph::new();
        let x = g.constant(t(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
        let y = g.gather_rows(x, &[2, 0]).unwrap();
        assert_eq!(g.value(y).data, vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn l1_gradient_sign() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::scalar(2.0));
        let x = g.constant(Tensor::scalar(1.5));
        let y = g.constant(Tensor::scalar(1.0));
        let wx = g.mul(w, x).unwrap();
        let loss = g.l1_loss(wx, y).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[1.5]);
    }

    #[test]
    fn l1_values() {
        let mut g = Graph::new();
        let p = g.constant(t(1, 2, &[1.0, 1.0]));
        let q = g.constant(t(1, 2, &[0.0, 2.0]));
        let l = g.l1_loss(p, q).unwrap();
        assert_eq!(g.value(l).item(), 1.0);
        let l0 = g.l1_loss(p, p).unwrap();
        assert_eq!(g.value(l0).item(), 0.0);
    }

    #[test]
    fn cross_entropy_of_zero_logits_is_ln3() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(4, 3));
        let l = g.cross_entropy(x, &[0, 1, 2, 1]).unwrap();
        assert!((g.value(l).item() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_decreases_with_margin() {
        let mut last = f64::INFINITY;
        for m in [0.0, 1.0, 5.0, 20.0, 100.0] {
            let mut g = Graph::new();
            let x = g.constant(t(1, 3, &[m, 0.0, 0.0]));
            let l = g.cross_entropy(x, &[0]).unwrap();
            let v = g.value(l).item();
            assert!(v < last && v >= 0.0);
            last = v;
        }
        assert!(last < 1e-40);
    }

    #[test]
    fn bad_label_and_not_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(2, 3));
        assert!(matches!(g.cross_entropy(x, &[0, 3]), Err(NnError::BadLabel { row: 1, label: 3, .. })));
        assert!(matches!(g.backward(x), Err(NnError::NotScalar { rows: 2, cols: 3 })));
    }

    #[test]
    fn shape_mismatch() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(2, 3));
        assert!(matches!(g.matmul(a, b), Err(NnError::ShapeMismatch { .. })));
        assert!(g.matmul_nt(a, b).is_ok());
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::scalar(2.0));
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.mul(c, x).unwrap();
        g.backward(y).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap(), &[2.0]);
    }
}
