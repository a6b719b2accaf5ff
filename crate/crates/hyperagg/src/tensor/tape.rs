//! Reverse-mode automatic differentiation over a dynamically recorded tape.
//!
//! Every operation appends one node holding its output values plus the
//! information its backward rule needs. `backward` replays the tape once in
//! reverse, accumulating gradients; a tape is built fresh for every forward
//! pass because neighborhood sizes change per vertex and per epoch.

use std::rc::Rc;

use rand::Rng;

use crate::error::{HgError, Result};
use crate::tensor::Matrix;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Square sparse matrix in CSR form together with its transpose, used for
/// fixed (non-trainable) propagation such as the normalized GCN adjacency.
#[derive(Debug)]
pub struct SparseMat {
    pub n: usize,
    pub offsets: Vec<usize>,
    pub targets: Vec<usize>,
    pub weights: Vec<f64>,
    t_offsets: Vec<usize>,
    t_targets: Vec<usize>,
    t_weights: Vec<f64>,
}

impl SparseMat {
    /// Builds from CSR triples; the transpose is derived internally.
    pub fn new(n: usize, offsets: Vec<usize>, targets: Vec<usize>, weights: Vec<f64>) -> Self {
        let mut t_counts = vec![0usize; n];
        for &t in &targets {
            t_counts[t] += 1;
        }
        let mut t_offsets = vec![0usize; n + 1];
        for i in 0..n {
            t_offsets[i + 1] = t_offsets[i] + t_counts[i];
        }
        let mut cursor = t_offsets.clone();
        let mut t_targets = vec![0usize; targets.len()];
        let mut t_weights = vec![0.0; targets.len()];
        for src in 0..n {
            for e in offsets[src]..offsets[src + 1] {
                let dst = targets[e];
                let pos = cursor[dst];
                t_targets[pos] = src;
                t_weights[pos] = weights[e];
                cursor[dst] += 1;
            }
        }
        SparseMat {
            n,
            offsets,
            targets,
            weights,
            t_offsets,
            t_targets,
            t_weights,
        }
    }

    fn apply(&self, transposed: bool, x: &[f64], cols: usize, out: &mut [f64]) {
        let (off, tgt, w) = if transposed {
            (&self.t_offsets, &self.t_targets, &self.t_weights)
        } else {
            (&self.offsets, &self.targets, &self.weights)
        };
        for i in 0..self.n {
            let o = &mut out[i * cols..(i + 1) * cols];
            for e in off[i]..off[i + 1] {
                let j = tgt[e];
                let wij = w[e];
                let xr = &x[j * cols..(j + 1) * cols];
                for c in 0..cols {
                    o[c] += wij * xr[c];
                }
            }
        }
    }
}

enum Op {
    Leaf,
    Matmul(Var, Var),
    Transpose(Var),
    Gelu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    /// Row-broadcast bias add: (n x h) + (1 x h).
    AddRow(Var, Var),
    MeanRows(Var),
    SumAll(Var),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    RowSelect(Var, Vec<usize>),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    /// Mask entries are 0 or 1/(1-p); identity outside training.
    Dropout(Var, Vec<f64>),
    SoftmaxCe {
        logits: Var,
        labels: Vec<usize>,
        rows: Vec<usize>,
        /// Softmax rows for the supervised vertices, in `rows` order.
        probs: Vec<f64>,
    },
    MaeLoss {
        pred: Var,
        targets: Vec<f64>,
        rows: Vec<usize>,
    },
    SpMM(Rc<SparseMat>, Var),
}

struct Node {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

/// Recorded forward pass. Nodes are in topological order by construction.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

fn gelu_scalar(x: f64) -> f64 {
    // x * Phi(x) with the exact standard-normal CDF
    x * 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let phi_cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let phi_pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    phi_cdf + x * phi_pdf
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

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    /// Gradient buffer of a node; zeros until `backward` has run.
    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].grad
    }

    pub fn to_matrix(&self, v: Var) -> Matrix {
        let n = &self.nodes[v.0];
        Matrix::from_vec(n.rows, n.cols, n.data.clone()).expect("node shape consistent")
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(data.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            data,
            grad: Vec::new(),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers an input value (no gradient tracking by name).
    pub fn leaf(&mut self, m: &Matrix) -> Var {
        self.push(m.rows(), m.cols(), m.data().to_vec(), Op::Leaf)
    }

    pub fn leaf_from(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(HgError::data("leaf buffer length mismatch".to_string()));
        }
        Ok(self.push(rows, cols, data, Op::Leaf))
    }

    /// Registers a named parameter leaf so its gradient can be read back.
    pub fn param(&mut self, name: &str, m: &Matrix) -> Var {
        debug_assert!(
            self.params.iter().all(|(n, _)| n != name),
            "parameter {name} bound twice on one tape"
        );
        let v = self.leaf(m);
        self.params.push((name.to_string(), v));
        v
    }

    pub fn param_vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(n, v)| (n.as_str(), *v))
    }

    pub fn grad_of_param(&self, name: &str) -> Option<&[f64]> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| self.grad(*v))
    }

    fn dim_err(
        op: &'static str,
        (lr, lc): (usize, usize),
        (rr, rc): (usize, usize),
    ) -> HgError {
        HgError::Dim {
            op,
            lhs_rows: lr,
            lhs_cols: lc,
            rhs_rows: rr,
            rhs_cols: rc,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.shape(a);
        let (q2, r) = self.shape(b);
        if q != q2 {
            return Err(Self::dim_err("matmul", (p, q), (q2, r)));
        }
        let mut out = vec![0.0; p * r];
        {
            let ad = &self.nodes[a.0].data;
            let bd = &self.nodes[b.0].data;
            for i in 0..p {
                let arow = &ad[i * q..(i + 1) * q];
                let orow = &mut out[i * r..(i + 1) * r];
                for (k, &aik) in arow.iter().enumerate() {
                    if aik == 0.0 {
                        continue;
                    }
                    let brow = &bd[k * r..(k + 1) * r];
                    for j in 0..r {
                        orow[j] += aik * brow[j];
                    }
                }
            }
        }
        Ok(self.push(p, r, out, Op::Matmul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (p, q) = self.shape(a);
        let mut out = vec![0.0; p * q];
        {
            let ad = &self.nodes[a.0].data;
            for i in 0..p {
                for j in 0..q {
                    out[j * p + i] = ad[i * q + j];
                }
            }
        }
        self.push(q, p, out, Op::Transpose(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let (p, q) = self.shape(a);
        let out = self.nodes[a.0].data.iter().map(|&x| gelu_scalar(x)).collect();
        self.push(p, q, out, Op::Gelu(a))
    }

    fn zip_same_shape(&mut self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Self::dim_err(op, sa, sb));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.zip_same_shape("add", a, b)?;
        let out = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(p, q, out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.zip_same_shape("sub", a, b)?;
        let out = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.push(p, q, out, Op::Sub(a, b)))
    }

    pub fn elementwise_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.zip_same_shape("elementwise_mul", a, b)?;
        let out = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(p, q, out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (p, q) = self.shape(a);
        let out = self.nodes[a.0].data.iter().map(|x| x * s).collect();
        self.push(p, q, out, Op::Scale(a, s))
    }

    /// x (n x h) plus a 1 x h row broadcast to every row.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (p, q) = self.shape(x);
        let (rr, rc) = self.shape(row);
        if rr != 1 || rc != q {
            return Err(Self::dim_err("add_row", (p, q), (rr, rc)));
        }
        let mut out = self.nodes[x.0].data.clone();
        {
            let b = &self.nodes[row.0].data;
            for i in 0..p {
                for j in 0..q {
                    out[i * q + j] += b[j];
                }
            }
        }
        Ok(self.push(p, q, out, Op::AddRow(x, row)))
    }

    /// Column means collapsed to a single row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (p, q) = self.shape(a);
        if p == 0 {
            return Err(HgError::EmptyNeighborhood);
        }
        let mut out = vec![0.0; q];
        {
            let ad = &self.nodes[a.0].data;
            for i in 0..p {
                for j in 0..q {
                    out[j] += ad[i * q + j];
                }
            }
            for v in out.iter_mut() {
                *v /= p as f64;
            }
        }
        Ok(self.push(1, q, out, Op::MeanRows(a)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].data.iter().sum();
        self.push(1, 1, vec![s], Op::SumAll(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.shape(a);
        let (p2, r) = self.shape(b);
        if p != p2 {
            return Err(Self::dim_err("concat_cols", (p, q), (p2, r)));
        }
        let mut out = Vec::with_capacity(p * (q + r));
        {
            let ad = &self.nodes[a.0].data;
            let bd = &self.nodes[b.0].data;
            for i in 0..p {
                out.extend_from_slice(&ad[i * q..(i + 1) * q]);
                out.extend_from_slice(&bd[i * r..(i + 1) * r]);
            }
        }
        Ok(self.push(p, q + r, out, Op::ConcatCols(a, b)))
    }

    /// Vertical stack; all parts must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(HgError::data("concat_rows of zero parts".to_string()));
        }
        let (_, q) = self.shape(parts[0]);
        let mut rows = 0;
        for &part in parts {
            let (pr, pc) = self.shape(part);
            if pc != q {
                return Err(Self::dim_err("concat_rows", (rows, q), (pr, pc)));
            }
            rows += pr;
        }
        let mut out = Vec::with_capacity(rows * q);
        for &part in parts {
            out.extend_from_slice(&self.nodes[part.0].data);
        }
        Ok(self.push(rows, q, out, Op::ConcatRows(parts.to_vec())))
    }

    /// Gathers the given rows; backward scatter-adds into the source.
    pub fn row_select(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let (p, q) = self.shape(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= p) {
            return Err(HgError::data(format!(
                "row_select index {bad} out of range for {p} rows"
            )));
        }
        let mut out = Vec::with_capacity(indices.len() * q);
        {
            let ad = &self.nodes[a.0].data;
            for &i in indices {
                out.extend_from_slice(&ad[i * q..(i + 1) * q]);
            }
        }
        Ok(self.push(indices.len(), q, out, Op::RowSelect(a, indices.to_vec())))
    }

    /// Per-row standardization with learned gain and bias (both 1 x h).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (p, q) = self.shape(x);
        for (v, name) in [(gain, "gain"), (bias, "bias")] {
            let s = self.shape(v);
            if s != (1, q) {
                return Err(HgError::config(format!(
                    "layer_norm {name} must be 1x{q}, got {}x{}",
                    s.0, s.1
                )));
            }
        }
        let mut out = vec![0.0; p * q];
        let mut mean = vec![0.0; p];
        let mut inv_std = vec![0.0; p];
        {
            let xd = &self.nodes[x.0].data;
            let g = &self.nodes[gain.0].data;
            let b = &self.nodes[bias.0].data;
            for i in 0..p {
                let row = &xd[i * q..(i + 1) * q];
                let mu = row.iter().sum::<f64>() / q as f64;
                let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / q as f64;
                let isd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                mean[i] = mu;
                inv_std[i] = isd;
                for j in 0..q {
                    out[i * q + j] = (row[j] - mu) * isd * g[j] + b[j];
                }
            }
        }
        Ok(self.push(
            p,
            q,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                inv_std,
            },
        ))
    }

    /// Inverted dropout: zero with probability p, scale survivors by 1/(1-p).
    /// Identity when not training or p == 0 (no node recorded, no rng draw).
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(HgError::config(format!(
                "dropout probability must be in [0,1), got {p}"
            )));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let (rows, cols) = self.shape(x);
        let keep_scale = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep_scale })
            .collect();
        let out = self.nodes[x.0]
            .data
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        Ok(self.push(rows, cols, out, Op::Dropout(x, mask)))
    }

    /// Mean negative log-likelihood over the supervised rows, log-sum-exp
    /// stabilized. `labels[i]` pairs with `rows[i]`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        rows: &[usize],
        labels: &[usize],
    ) -> Result<Var> {
        let (n, c) = self.shape(logits);
        if rows.is_empty() {
            return Err(HgError::EmptyMask);
        }
        if rows.len() != labels.len() {
            return Err(HgError::data(
                "softmax_cross_entropy rows/labels length mismatch".to_string(),
            ));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(HgError::data(format!("supervised row {bad} out of range")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(HgError::data(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        let mut probs = vec![0.0; rows.len() * c];
        let mut loss = 0.0;
        {
            let ld = &self.nodes[logits.0].data;
            for (k, (&r, &y)) in rows.iter().zip(labels).enumerate() {
                let row = &ld[r * c..(r + 1) * c];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for j in 0..c {
                    let e = (row[j] - max).exp();
                    probs[k * c + j] = e;
                    sum += e;
                }
                for j in 0..c {
                    probs[k * c + j] /= sum;
                }
                loss += sum.ln() + max - row[y];
            }
        }
        loss /= rows.len() as f64;
        Ok(self.push(
            1,
            1,
            vec![loss],
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                rows: rows.to_vec(),
                probs,
            },
        ))
    }

    /// Mean absolute error over the given rows of a single-column prediction.
    pub fn mae_loss(&mut self, pred: Var, rows: &[usize], targets: &[f64]) -> Result<Var> {
        let (n, c) = self.shape(pred);
        if c != 1 {
            return Err(Self::dim_err("mae_loss", (n, c), (n, 1)));
        }
        if rows.is_empty() {
            return Err(HgError::EmptyMask);
        }
        if rows.len() != targets.len() {
            return Err(HgError::data("mae_loss rows/targets length mismatch".to_string()));
        }
        let mut loss = 0.0;
        {
            let pd = &self.nodes[pred.0].data;
            for (&r, &t) in rows.iter().zip(targets) {
                loss += (pd[r] - t).abs();
            }
        }
        loss /= rows.len() as f64;
        Ok(self.push(
            1,
            1,
            vec![loss],
            Op::MaeLoss {
                pred,
                targets: targets.to_vec(),
                rows: rows.to_vec(),
            },
        ))
    }

    /// out = P * x for a fixed sparse square matrix P.
    pub fn spmm(&mut self, p: Rc<SparseMat>, x: Var) -> Result<Var> {
        let (n, c) = self.shape(x);
        if p.n != n {
            return Err(Self::dim_err("spmm", (p.n, p.n), (n, c)));
        }
        let mut out = vec![0.0; n * c];
        p.apply(false, &self.nodes[x.0].data, c, &mut out);
        Ok(self.push(n, c, out, Op::SpMM(p, x)))
    }

    /// Runs the backward pass from a scalar loss node, filling every
    /// reachable node's gradient buffer. Unreached nodes keep zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(HgError::numerical(format!(
                "backward requires a 1x1 loss node, got {r}x{c}"
            )));
        }
        for node in self.nodes.iter_mut() {
            node.grad = vec![0.0; node.data.len()];
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for idx in (0..=loss.0).rev() {
            // Take the grad out to appease the borrow checker; ops never
            // reference their own output as an input.
            let gout = std::mem::take(&mut self.nodes[idx].grad);
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (p, q) = self.shape(a);
                    let (_, r) = self.shape(b);
                    // dA = dC * B^T
                    let mut da = vec![0.0; p * q];
                    {
                        let bd = &self.nodes[b.0].data;
                        for i in 0..p {
                            let grow = &gout[i * r..(i + 1) * r];
                            let darow = &mut da[i * q..(i + 1) * q];
                            for k in 0..q {
                                let brow = &bd[k * r..(k + 1) * r];
                                let mut acc = 0.0;
                                for j in 0..r {
                                    acc += grow[j] * brow[j];
                                }
                                darow[k] += acc;
                            }
                        }
                    }
                    // dB = A^T * dC
                    let mut db = vec![0.0; q * r];
                    {
                        let ad = &self.nodes[a.0].data;
                        for i in 0..p {
                            let arow = &ad[i * q..(i + 1) * q];
                            let grow = &gout[i * r..(i + 1) * r];
                            for (k, &aik) in arow.iter().enumerate() {
                                if aik == 0.0 {
                                    continue;
                                }
                                let dbrow = &mut db[k * r..(k + 1) * r];
                                for j in 0..r {
                                    dbrow[j] += aik * grow[j];
                                }
                            }
                        }
                    }
                    accumulate(&mut self.nodes[a.0].grad, &da);
                    accumulate(&mut self.nodes[b.0].grad, &db);
                }
                Op::Transpose(a) => {
                    let a = *a;
                    let (p, q) = self.shape(a);
                    let ga = &mut self.nodes[a.0].grad;
                    for i in 0..p {
                        for j in 0..q {
                            ga[i * q + j] += gout[j * p + i];
                        }
                    }
                }
                Op::Gelu(a) => {
                    let a = *a;
                    let da: Vec<f64> = self.nodes[a.0]
                        .data
                        .iter()
                        .zip(&gout)
                        .map(|(&x, g)| g * gelu_grad_scalar(x))
                        .collect();
                    accumulate(&mut self.nodes[a.0].grad, &da);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut self.nodes[a.0].grad, &gout);
                    accumulate(&mut self.nodes[b.0].grad, &gout);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut self.nodes[a.0].grad, &gout);
                    let gb = &mut self.nodes[b.0].grad;
                    for (g, d) in gb.iter_mut().zip(&gout) {
                        *g -= d;
                    }
                }
                Op::Scale(a, s) => {
                    let (a, s) = (*a, *s);
                    let ga = &mut self.nodes[a.0].grad;
                    for (g, d) in ga.iter_mut().zip(&gout) {
                        *g += s * d;
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da: Vec<f64> = self.nodes[b.0]
                        .data
                        .iter()
                        .zip(&gout)
                        .map(|(y, g)| y * g)
                        .collect();
                    let db: Vec<f64> = self.nodes[a.0]
                        .data
                        .iter()
                        .zip(&gout)
                        .map(|(x, g)| x * g)
                        .collect();
                    accumulate(&mut self.nodes[a.0].grad, &da);
                    accumulate(&mut self.nodes[b.0].grad, &db);
                }
                Op::AddRow(x, row) => {
                    let (x, row) = (*x, *row);
                    let (p, q) = self.shape(x);
                    accumulate(&mut self.nodes[x.0].grad, &gout);
                    let gb = &mut self.nodes[row.0].grad;
                    for i in 0..p {
                        for j in 0..q {
                            gb[j] += gout[i * q + j];
                        }
                    }
                }
                Op::MeanRows(a) => {
                    let a = *a;
                    let (p, q) = self.shape(a);
                    let inv = 1.0 / p as f64;
                    let ga = &mut self.nodes[a.0].grad;
                    for i in 0..p {
                        for j in 0..q {
                            ga[i * q + j] += gout[j] * inv;
                        }
                    }
                }
                Op::SumAll(a) => {
                    let a = *a;
                    let g = gout[0];
                    let ga = &mut self.nodes[a.0].grad;
                    for v in ga.iter_mut() {
                        *v += g;
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (a, b) = (*a, *b);
                    let (p, q) = self.shape(a);
                    let (_, r) = self.shape(b);
                    {
                        let ga = &mut self.nodes[a.0].grad;
                        for i in 0..p {
                            for j in 0..q {
                                ga[i * q + j] += gout[i * (q + r) + j];
                            }
                        }
                    }
                    let gb = &mut self.nodes[b.0].grad;
                    for i in 0..p {
                        for j in 0..r {
                            gb[i * r + j] += gout[i * (q + r) + q + j];
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for part in parts {
                        let (pr, pc) = self.shape(part);
                        let len = pr * pc;
                        accumulate(
                            &mut self.nodes[part.0].grad,
                            &gout[offset..offset + len],
                        );
                        offset += len;
                    }
                }
                Op::RowSelect(a, indices) => {
                    let a = *a;
                    let indices = indices.clone();
                    let (_, q) = self.shape(a);
                    let ga = &mut self.nodes[a.0].grad;
                    for (k, &i) in indices.iter().enumerate() {
                        for j in 0..q {
                            ga[i * q + j] += gout[k * q + j];
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    mean,
                    inv_std,
                } => {
                    let (x, gain, bias) = (*x, *gain, *bias);
                    let mean = mean.clone();
                    let inv_std = inv_std.clone();
                    let (p, q) = self.shape(x);
                    let qf = q as f64;
                    let mut dx = vec![0.0; p * q];
                    let mut dgain = vec![0.0; q];
                    let mut dbias = vec![0.0; q];
                    {
                        let xd = &self.nodes[x.0].data;
                        let g = &self.nodes[gain.0].data;
                        for i in 0..p {
                            let row = &xd[i * q..(i + 1) * q];
                            let grow = &gout[i * q..(i + 1) * q];
                            let isd = inv_std[i];
                            let mu = mean[i];
                            let mut s1 = 0.0;
                            let mut s2 = 0.0;
                            for j in 0..q {
                                let xhat = (row[j] - mu) * isd;
                                let dxhat = grow[j] * g[j];
                                dgain[j] += grow[j] * xhat;
                                dbias[j] += grow[j];
                                s1 += dxhat;
                                s2 += dxhat * xhat;
                            }
                            for j in 0..q {
                                let xhat = (row[j] - mu) * isd;
                                let dxhat = grow[j] * g[j];
                                dx[i * q + j] = isd * (dxhat - s1 / qf - xhat * s2 / qf);
                            }
                        }
                    }
                    accumulate(&mut self.nodes[x.0].grad, &dx);
                    accumulate(&mut self.nodes[gain.0].grad, &dgain);
                    accumulate(&mut self.nodes[bias.0].grad, &dbias);
                }
                Op::Dropout(x, mask) => {
                    let x = *x;
                    let dx: Vec<f64> = mask.iter().zip(&gout).map(|(m, g)| m * g).collect();
                    accumulate(&mut self.nodes[x.0].grad, &dx);
                }
                Op::SoftmaxCe {
                    logits,
                    labels,
                    rows,
                    probs,
                } => {
                    let logits = *logits;
                    let labels = labels.clone();
                    let rows = rows.clone();
                    let probs = probs.clone();
                    let (_, c) = self.shape(logits);
                    let scale = gout[0] / rows.len() as f64;
                    let gl = &mut self.nodes[logits.0].grad;
                    for (k, (&r, &y)) in rows.iter().zip(&labels).enumerate() {
                        for j in 0..c {
                            let indicator = if j == y { 1.0 } else { 0.0 };
                            gl[r * c + j] += scale * (probs[k * c + j] - indicator);
                        }
                    }
                }
                Op::MaeLoss {
                    pred,
                    targets,
                    rows,
                } => {
                    let pred = *pred;
                    let targets = targets.clone();
                    let rows = rows.clone();
                    let scale = gout[0] / rows.len() as f64;
                    let pd: Vec<f64> = rows.iter().map(|&r| self.nodes[pred.0].data[r]).collect();
                    let gp = &mut self.nodes[pred.0].grad;
                    for ((&r, &t), &p) in rows.iter().zip(&targets).zip(&pd) {
                        let diff = p - t;
                        // subgradient 0 at the kink
                        gp[r] += scale * diff.signum() * if diff == 0.0 { 0.0 } else { 1.0 };
                    }
                }
                Op::SpMM(pmat, x) => {
                    let pmat = Rc::clone(pmat);
                    let x = *x;
                    let (_, c) = self.shape(x);
                    let mut dx = vec![0.0; pmat.n * c];
                    pmat.apply(true, &gout, c, &mut dx);
                    accumulate(&mut self.nodes[x.0].grad, &dx);
                }
            }
            self.nodes[idx].grad = gout;
        }
        Ok(())
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
