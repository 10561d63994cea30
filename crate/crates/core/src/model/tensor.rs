//! Reverse-mode automatic differentiation over row-major matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Nodes are appended
//! in evaluation order, so walking the tape backwards is a valid topological
//! order and [`Tape::backward`] visits each node exactly once. Parameters are
//! read in place from a borrowed [`ParamStore`]; their gradients land in a
//! [`Grads`] buffer of the same layout.

use rand::Rng;

use crate::model::params::{Grads, ParamId, ParamStore};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    AddN(Vec<Var>),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Embed { table: Var, ids: Vec<u32> },
    Attention { q: Var, k: Var, v: Var, heads: usize, valid: Vec<bool>, probs: Vec<f64> },
    MeanRows { x: Var, rows: Vec<usize> },
    Dropout { x: Var, mask: Vec<f64> },
    CrossEntropy { logits: Var, rows: Vec<usize>, targets: Vec<u32>, probs: Vec<f64> },
    Bce { logits: Var, idx: Vec<usize>, labels: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    /// Empty for parameter nodes, whose values live in the store.
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    frozen: Option<&'p [bool]>,
}

/// `c += alpha * a(m x k) * b(k x n)` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // Bounds the unsafe call below: every index touched lies in the slices.
    assert!((m - 1) * rsa + (k - 1) * csa < a.len());
    assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the assertions above keep all strided accesses in bounds and
    // `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[inline]
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Numerically stable `log(1 + exp(x))`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
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

/// In-place softmax of one row; returns log-sum-exp.
#[inline]
pub fn softmax_in_place(row: &mut [f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
    max + sum.ln()
}

pub const LN_EPS: f64 = 1e-5;

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape { store, nodes: Vec::with_capacity(128), frozen: None }
    }

    /// Parameters flagged `true` in `frozen` get no gradient.
    pub fn with_frozen(store: &'p ParamStore, frozen: &'p [bool]) -> Self {
        Tape { store, nodes: Vec::with_capacity(128), frozen: Some(frozen) }
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node { rows, cols, value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        let n = &self.nodes[v.0];
        [n.rows, n.cols]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.store.get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(value.len(), rows * cols, "constant shape");
        self.push(rows, cols, value, Op::Leaf, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let [r, c] = self.store.shape(id);
        let trainable = self.frozen.map_or(true, |f| !f[id]);
        self.push(r, c, Vec::new(), Op::Param(id), trainable)
    }

    pub fn param_by_name(&mut self, name: &str) -> Var {
        let id = self.store.id(name).unwrap_or_else(|| panic!("unknown parameter '{name}'"));
        self.param(id)
    }

    /// `x W + b` for `x: [T, in]`, `W: [in, out]`, `b: [1, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let [t, din] = self.shape(x);
        let [win, dout] = self.shape(w);
        assert_eq!(din, win, "linear: input width {din} vs weight rows {win}");
        let mut y = vec![0.0; t * dout];
        if let Some(b) = b {
            assert_eq!(self.shape(b), [1, dout], "linear bias shape");
            let bv = self.value(b);
            for row in y.chunks_exact_mut(dout) {
                row.copy_from_slice(bv);
            }
        }
        gemm(t, din, dout, self.value(x), din, 1, self.value(w), dout, 1, &mut y, dout, 1);
        let ng = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(t, dout, y, Op::Linear { x, w, b }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let y: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let [r, c] = self.shape(a);
        let ng = self.needs(a) || self.needs(b);
        self.push(r, c, y, Op::Add(a, b), ng)
    }

    pub fn add_n(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "add_n of nothing");
        let [r, c] = self.shape(vars[0]);
        let mut y = vec![0.0; r * c];
        for &v in vars {
            assert_eq!(self.shape(v), [r, c], "add_n shapes");
            for (o, x) in y.iter_mut().zip(self.value(v)) {
                *o += x;
            }
        }
        let ng = vars.iter().any(|&v| self.needs(v));
        self.push(r, c, y, Op::AddN(vars.to_vec()), ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let y = self.value(x).iter().map(|v| v * s).collect();
        let [r, c] = self.shape(x);
        let ng = self.needs(x);
        self.push(r, c, y, Op::Scale(x, s), ng)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let y = self.value(x).iter().map(|&v| gelu(v)).collect();
        let [r, c] = self.shape(x);
        let ng = self.needs(x);
        self.push(r, c, y, Op::Gelu(x), ng)
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` of shape `[1, d]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let [t, d] = self.shape(x);
        let xv = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut xhat = vec![0.0; t * d];
        let mut rstd = vec![0.0; t];
        let mut y = vec![0.0; t * d];
        for r in 0..t {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs;
            for c in 0..d {
                let h = (row[c] - mean) * rs;
                xhat[r * d + c] = h;
                y[r * d + c] = h * g[c] + b[c];
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(t, d, y, Op::LayerNorm { x, gamma, beta, xhat, rstd }, ng)
    }

    /// Gathers rows of `table` by token id.
    pub fn embed(&mut self, table: Var, ids: &[u32]) -> Var {
        let [vocab, d] = self.shape(table);
        let tv = self.value(table);
        let mut y = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            assert!((i as usize) < vocab, "embedding id {i} outside table of {vocab}");
            y.extend_from_slice(&tv[i as usize * d..(i as usize + 1) * d]);
        }
        let ng = self.needs(table);
        self.push(ids.len(), d, y, Op::Embed { table, ids: ids.to_vec() }, ng)
    }

    /// Multi-head scaled dot-product attention. Keys with `valid[j] == false`
    /// receive zero weight and are never read.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, valid: &[bool]) -> Var {
        let [t, d] = self.shape(q);
        assert_eq!(self.shape(k), [t, d]);
        assert_eq!(self.shape(v), [t, d]);
        assert_eq!(valid.len(), t);
        assert_eq!(d % heads, 0, "hidden size not divisible by heads");
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let keys: Vec<usize> = (0..t).filter(|&j| valid[j]).collect();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut probs = vec![0.0; heads * t * t];
        let mut out = vec![0.0; t * d];
        let mut scores = vec![0.0; keys.len()];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..t {
                let qi = &qv[i * d + off..i * d + off + dh];
                for (s, &j) in scores.iter_mut().zip(&keys) {
                    let kj = &kv[j * d + off..j * d + off + dh];
                    *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                if keys.is_empty() {
                    continue;
                }
                softmax_in_place(&mut scores);
                let prow = &mut probs[(h * t + i) * t..(h * t + i + 1) * t];
                let orow = &mut out[i * d + off..i * d + off + dh];
                for (&p, &j) in scores.iter().zip(&keys) {
                    prow[j] = p;
                    let vj = &vv[j * d + off..j * d + off + dh];
                    for (o, x) in orow.iter_mut().zip(vj) {
                        *o += p * x;
                    }
                }
            }
        }
        let ng = self.needs(q) || self.needs(k) || self.needs(v);
        self.push(t, d, out, Op::Attention { q, k, v, heads, valid: valid.to_vec(), probs }, ng)
    }

    /// Attention weights `[heads, T, T]` of an attention node.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Mean of the listed rows, as a `[1, d]` node.
    pub fn mean_rows(&mut self, x: Var, rows: &[usize]) -> Var {
        assert!(!rows.is_empty(), "mean over no rows");
        let [_, d] = self.shape(x);
        let xv = self.value(x);
        let mut y = vec![0.0; d];
        for &r in rows {
            for (o, v) in y.iter_mut().zip(&xv[r * d..(r + 1) * d]) {
                *o += v;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        y.iter_mut().for_each(|v| *v *= inv);
        let ng = self.needs(x);
        self.push(1, d, y, Op::MeanRows { x, rows: rows.to_vec() }, ng)
    }

    /// Inverted dropout. A rate of zero returns `x` unchanged.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut impl Rng) -> Var {
        if rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> =
            (0..self.value(x).len()).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let y = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let [r, c] = self.shape(x);
        let ng = self.needs(x);
        self.push(r, c, y, Op::Dropout { x, mask }, ng)
    }

    /// Mean negative log-likelihood of `targets` at `rows` of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, rows: &[usize], targets: &[u32]) -> Var {
        assert_eq!(rows.len(), targets.len());
        assert!(!rows.is_empty(), "cross entropy over no rows");
        let [_, v] = self.shape(logits);
        let lv = self.value(logits);
        let mut probs = Vec::with_capacity(rows.len() * v);
        let mut total = 0.0;
        for (&r, &t) in rows.iter().zip(targets) {
            assert!((t as usize) < v, "target {t} outside {v} classes");
            let mut row = lv[r * v..(r + 1) * v].to_vec();
            let target_logit = row[t as usize];
            let lse = softmax_in_place(&mut row);
            total += lse - target_logit;
            probs.extend_from_slice(&row);
        }
        let loss = total / rows.len() as f64;
        let ng = self.needs(logits);
        self.push(
            1,
            1,
            vec![loss],
            Op::CrossEntropy { logits, rows: rows.to_vec(), targets: targets.to_vec(), probs },
            ng,
        )
    }

    /// Mean binary cross-entropy with logits at flat indices `idx`.
    pub fn bce_with_logits(&mut self, logits: Var, idx: &[usize], labels: &[f64]) -> Var {
        assert_eq!(idx.len(), labels.len());
        assert!(!idx.is_empty(), "BCE over no entries");
        let lv = self.value(logits);
        let total: f64 = idx.iter().zip(labels).map(|(&i, &y)| softplus(lv[i]) - y * lv[i]).sum();
        let loss = total / idx.len() as f64;
        let ng = self.needs(logits);
        self.push(1, 1, vec![loss], Op::Bce { logits, idx: idx.to_vec(), labels: labels.to_vec() }, ng)
    }

    /// Backpropagates from the scalar `root`, accumulating parameter
    /// gradients into `grads`.
    pub fn backward(&self, root: Var, grads: &mut Grads) {
        assert_eq!(self.shape(root), [1, 1], "backward from a non-scalar");
        let mut g: Vec<Vec<f64>> = Vec::with_capacity(root.0 + 1);
        g.resize_with(root.0 + 1, Vec::new);
        g[root.0] = vec![1.0];

        fn acc(g: &mut [Vec<f64>], v: Var, len: usize) -> &mut [f64] {
            if g[v.0].is_empty() {
                g[v.0] = vec![0.0; len];
            }
            &mut g[v.0]
        }

        for idx in (0..=root.0).rev() {
            if g[idx].is_empty() || !self.nodes[idx].needs_grad {
                continue;
            }
            let gy = std::mem::take(&mut g[idx]);
            let node = &self.nodes[idx];
            let (rows, cols) = (node.rows, node.cols);
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    for (o, x) in grads.data[*id].iter_mut().zip(&gy) {
                        *o += x;
                    }
                }
                Op::Linear { x, w, b } => {
                    let [t, din] = self.shape(*x);
                    let dout = cols;
                    if self.needs(*x) {
                        let wv = self.value(*w);
                        let gx = acc(&mut g, *x, t * din);
                        // dX = dY W^T
                        gemm(t, dout, din, &gy, dout, 1, wv, 1, dout, gx, din, 1);
                    }
                    if self.needs(*w) {
                        let xv = self.value(*x);
                        let gw = acc(&mut g, *w, din * dout);
                        // dW = X^T dY
                        gemm(din, t, dout, xv, 1, din, &gy, dout, 1, gw, dout, 1);
                    }
                    if let Some(b) = b {
                        if self.needs(*b) {
                            let gb = acc(&mut g, *b, dout);
                            for row in gy.chunks_exact(dout) {
                                for (o, v) in gb.iter_mut().zip(row) {
                                    *o += v;
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.needs(v) {
                            let ga = acc(&mut g, v, gy.len());
                            for (o, x) in ga.iter_mut().zip(&gy) {
                                *o += x;
                            }
                        }
                    }
                }
                Op::AddN(vars) => {
                    for &v in vars {
                        if self.needs(v) {
                            let ga = acc(&mut g, v, gy.len());
                            for (o, x) in ga.iter_mut().zip(&gy) {
                                *o += x;
                            }
                        }
                    }
                }
                Op::Scale(x, s) => {
                    let gx = acc(&mut g, *x, gy.len());
                    for (o, v) in gx.iter_mut().zip(&gy) {
                        *o += v * s;
                    }
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let gx = acc(&mut g, *x, gy.len());
                    for ((o, v), &xi) in gx.iter_mut().zip(&gy).zip(xv) {
                        *o += v * gelu_grad(xi);
                    }
                }
                Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                    let d = cols;
                    let gv = self.value(*gamma);
                    if self.needs(*gamma) {
                        let gg = acc(&mut g, *gamma, d);
                        for (gr, hr) in gy.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                            for c in 0..d {
                                gg[c] += gr[c] * hr[c];
                            }
                        }
                    }
                    if self.needs(*beta) {
                        let gb = acc(&mut g, *beta, d);
                        for gr in gy.chunks_exact(d) {
                            for c in 0..d {
                                gb[c] += gr[c];
                            }
                        }
                    }
                    if self.needs(*x) {
                        let gx = acc(&mut g, *x, rows * d);
                        let mut dxhat = vec![0.0; d];
                        for r in 0..rows {
                            let gr = &gy[r * d..(r + 1) * d];
                            let hr = &xhat[r * d..(r + 1) * d];
                            let mut mean_dh = 0.0;
                            let mut mean_dh_h = 0.0;
                            for c in 0..d {
                                dxhat[c] = gr[c] * gv[c];
                                mean_dh += dxhat[c];
                                mean_dh_h += dxhat[c] * hr[c];
                            }
                            mean_dh /= d as f64;
                            mean_dh_h /= d as f64;
                            for c in 0..d {
                                gx[r * d + c] += rstd[r] * (dxhat[c] - mean_dh - hr[c] * mean_dh_h);
                            }
                        }
                    }
                }
                Op::Embed { table, ids } => {
                    let [vocab, d] = self.shape(*table);
                    let gt = acc(&mut g, *table, vocab * d);
                    for (r, &i) in ids.iter().enumerate() {
                        let dst = &mut gt[i as usize * d..(i as usize + 1) * d];
                        for (o, v) in dst.iter_mut().zip(&gy[r * d..(r + 1) * d]) {
                            *o += v;
                        }
                    }
                }
                Op::Attention { q, k, v, heads, valid, probs } => {
                    let (t, d) = (rows, cols);
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let keys: Vec<usize> = (0..t).filter(|&j| valid[j]).collect();
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let mut gq = vec![0.0; t * d];
                    let mut gk = vec![0.0; t * d];
                    let mut gvv = vec![0.0; t * d];
                    let mut dp = vec![0.0; keys.len()];
                    for h in 0..*heads {
                        let off = h * dh;
                        for i in 0..t {
                            let prow = &probs[(h * t + i) * t..(h * t + i + 1) * t];
                            let go = &gy[i * d + off..i * d + off + dh];
                            let mut dot = 0.0;
                            for (slot, &j) in dp.iter_mut().zip(&keys) {
                                let vj = &vv[j * d + off..j * d + off + dh];
                                let s: f64 = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                                *slot = s;
                                dot += prow[j] * s;
                                let p = prow[j];
                                for (o, x) in gvv[j * d + off..j * d + off + dh].iter_mut().zip(go) {
                                    *o += p * x;
                                }
                            }
                            let qi = &qv[i * d + off..i * d + off + dh];
                            for (&s, &j) in dp.iter().zip(&keys) {
                                let ds = prow[j] * (s - dot) * scale;
                                if ds == 0.0 {
                                    continue;
                                }
                                let kj = &kv[j * d + off..j * d + off + dh];
                                for c in 0..dh {
                                    gq[i * d + off + c] += ds * kj[c];
                                    gk[j * d + off + c] += ds * qi[c];
                                }
                            }
                        }
                    }
                    for (var, buf) in [(*q, gq), (*k, gk), (*v, gvv)] {
                        if self.needs(var) {
                            let dst = acc(&mut g, var, t * d);
                            for (o, x) in dst.iter_mut().zip(&buf) {
                                *o += x;
                            }
                        }
                    }
                }
                Op::MeanRows { x, rows: picked } => {
                    let [xr, d] = self.shape(*x);
                    let inv = 1.0 / picked.len() as f64;
                    let gx = acc(&mut g, *x, xr * d);
                    for &r in picked {
                        for (o, v) in gx[r * d..(r + 1) * d].iter_mut().zip(&gy) {
                            *o += v * inv;
                        }
                    }
                }
                Op::Dropout { x, mask } => {
                    let gx = acc(&mut g, *x, gy.len());
                    for ((o, v), m) in gx.iter_mut().zip(&gy).zip(mask) {
                        *o += v * m;
                    }
                }
                Op::CrossEntropy { logits, rows: picked, targets, probs } => {
                    let [lr, v] = self.shape(*logits);
                    let scale = gy[0] / picked.len() as f64;
                    let gl = acc(&mut g, *logits, lr * v);
                    for (n, (&r, &t)) in picked.iter().zip(targets).enumerate() {
                        let p = &probs[n * v..(n + 1) * v];
                        let dst = &mut gl[r * v..(r + 1) * v];
                        for c in 0..v {
                            dst[c] += scale * p[c];
                        }
                        dst[t as usize] -= scale;
                    }
                }
                Op::Bce { logits, idx, labels } => {
                    let [lr, lc] = self.shape(*logits);
                    let lv = self.value(*logits);
                    let scale = gy[0] / idx.len() as f64;
                    let gl = acc(&mut g, *logits, lr * lc);
                    for (&i, &y) in idx.iter().zip(labels) {
                        gl[i] += scale * (sigmoid(lv[i]) - y);
                    }
                }
            }
        }
    }
}
