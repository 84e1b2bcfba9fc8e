//! Encoder → GRU → decoder network over a flat parameter vector.
//!
//! Activations are stored batch-major: a `B × n` block holds one row per
//! rollout path. Weight matrices are row-major `n_out × n_in`.

use matrixmultiply::dgemm;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

pub const DEFAULT_HIDDEN: usize = 64;
/// Width of the shared embedding applied to each one-hot row.
pub const DISCRETE_EMBEDDING: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Head {
    /// Logistic squashing into `(0,1)^dim`.
    Continuous,
    /// One logit row per dimension, straight-through one-hot output.
    Discrete { categories: usize },
}

/// Offsets of every block inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub dim: usize,
    pub hidden: usize,
    pub head: Head,
    pub input: usize,
    pub output: usize,
    pub enc1_w: usize,
    pub enc1_b: usize,
    pub enc2_w: usize,
    pub enc2_b: usize,
    pub gru_wx: usize,
    pub gru_uh: usize,
    pub gru_b: usize,
    pub dec1_w: usize,
    pub dec1_b: usize,
    pub dec2_w: usize,
    pub dec2_b: usize,
    pub dec3_w: usize,
    pub dec3_b: usize,
    pub emb: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(dim: usize, hidden: usize, head: Head) -> Self {
        let (input, output, emb_len) = match head {
            Head::Continuous => (dim + 1, dim, 0),
            Head::Discrete { categories } => (
                DISCRETE_EMBEDDING + 1,
                dim * categories,
                DISCRETE_EMBEDDING * categories,
            ),
        };
        let h = hidden;
        let mut at = 0;
        let mut take = |n: usize| {
            let start = at;
            at += n;
            start
        };
        let enc1_w = take(h * input);
        let enc1_b = take(h);
        let enc2_w = take(h * h);
        let enc2_b = take(h);
        let gru_wx = take(3 * h * h);
        let gru_uh = take(3 * h * h);
        let gru_b = take(3 * h);
        let dec1_w = take(h * h);
        let dec1_b = take(h);
        let dec2_w = take(h * h);
        let dec2_b = take(h);
        let dec3_w = take(output * h);
        let dec3_b = take(output);
        let emb = take(emb_len);
        Self {
            dim,
            hidden,
            head,
            input,
            output,
            enc1_w,
            enc1_b,
            enc2_w,
            enc2_b,
            gru_wx,
            gru_uh,
            gru_b,
            dec1_w,
            dec1_b,
            dec2_w,
            dec2_b,
            dec3_w,
            dec3_b,
            emb,
            len: at,
        }
    }

    /// `(offset, length, fan_in)` of every weight matrix; biases are the
    /// complement.
    fn weight_blocks(&self) -> Vec<(usize, usize, usize)> {
        let h = self.hidden;
        let mut v = vec![
            (self.enc1_w, h * self.input, self.input),
            (self.enc2_w, h * h, h),
            (self.gru_wx, 3 * h * h, h),
            (self.gru_uh, 3 * h * h, h),
            (self.dec1_w, h * h, h),
            (self.dec2_w, h * h, h),
            (self.dec3_w, self.output * h, h),
        ];
        if let Head::Discrete { categories } = self.head {
            v.push((self.emb, DISCRETE_EMBEDDING * categories, categories));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub dim: usize,
    pub hidden: usize,
    pub head: Head,
    pub values: Vec<f64>,
}

impl PolicyParams {
    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(dim: usize, hidden: usize, head: Head, stream: &SeedStream) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::Config("policy needs positive dim and hidden size".into()));
        }
        if let Head::Discrete { categories } = head {
            if categories < 2 {
                return Err(Error::Config("discrete head needs at least 2 categories".into()));
            }
        }
        let layout = Layout::new(dim, hidden, head);
        let mut values = vec![0.0; layout.len];
        let mut rng = stream.rng();
        for (off, len, fan_in) in layout.weight_blocks() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut values[off..off + len] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(Self {
            dim,
            hidden,
            head,
            values,
        })
    }

    pub fn zeros(dim: usize, hidden: usize, head: Head) -> Self {
        let layout = Layout::new(dim, hidden, head);
        Self {
            dim,
            hidden,
            head,
            values: vec![0.0; layout.len],
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.dim, self.hidden, self.head)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `out (B×nout) = input (B×nin) · Wᵀ + b`.
pub(crate) fn affine(w: &[f64], b: &[f64], input: &[f64], batch: usize, nin: usize, nout: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * nout);
    for _ in 0..batch {
        out.extend_from_slice(b);
    }
    gemm_abt(input, w, &mut out, batch, nin, nout, 1.0);
    out
}

/// `c (m×n) += alpha · a (m×k) · bᵀ` with `b` stored `n×k`.
fn gemm_abt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, beta: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Accumulates `dW += doutᵀ · input`, `db += colsum(dout)` and returns
/// `din = dout · W`.
pub(crate) fn affine_backward(
    w: &[f64],
    input: &[f64],
    dout: &[f64],
    batch: usize,
    nin: usize,
    nout: usize,
    dw: &mut [f64],
    db: Option<&mut [f64]>,
) -> Vec<f64> {
    debug_assert_eq!(dout.len(), batch * nout);
    unsafe {
        // dW (nout×nin) += doutᵀ (nout×B) · input (B×nin)
        dgemm(
            nout,
            batch,
            nin,
            1.0,
            dout.as_ptr(),
            1,
            nout as isize,
            input.as_ptr(),
            nin as isize,
            1,
            1.0,
            dw.as_mut_ptr(),
            nin as isize,
            1,
        );
    }
    if let Some(db) = db {
        for row in dout.chunks(nout) {
            for (a, g) in db.iter_mut().zip(row) {
                *a += g;
            }
        }
    }
    let mut din = vec![0.0; batch * nin];
    unsafe {
        // din (B×nin) = dout (B×nout) · W (nout×nin)
        dgemm(
            batch,
            nout,
            nin,
            1.0,
            dout.as_ptr(),
            nout as isize,
            1,
            w.as_ptr(),
            nin as isize,
            1,
            0.0,
            din.as_mut_ptr(),
            nin as isize,
            1,
        );
    }
    din
}

pub(crate) fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cached activations of one encoder or decoder pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct MlpCache {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

/// Sequence of affine layers with ELU after all but (optionally) the last.
pub(crate) struct Mlp {
    /// `(w offset, b offset, nin, nout, elu)`.
    pub layers: Vec<(usize, usize, usize, usize, bool)>,
}

impl Mlp {
    pub fn encoder(l: &Layout) -> Self {
        Self {
            layers: vec![
                (l.enc1_w, l.enc1_b, l.input, l.hidden, true),
                (l.enc2_w, l.enc2_b, l.hidden, l.hidden, true),
            ],
        }
    }

    pub fn decoder(l: &Layout) -> Self {
        Self {
            layers: vec![
                (l.dec1_w, l.dec1_b, l.hidden, l.hidden, true),
                (l.dec2_w, l.dec2_b, l.hidden, l.hidden, true),
                (l.dec3_w, l.dec3_b, l.hidden, l.output, false),
            ],
        }
    }

    pub fn forward(&self, p: &[f64], input: Vec<f64>, batch: usize) -> (Vec<f64>, MlpCache) {
        let mut cache = MlpCache::default();
        let mut x = input;
        for &(w, b, nin, nout, act) in &self.layers {
            let mut y = affine(&p[w..w + nin * nout], &p[b..b + nout], &x, batch, nin, nout);
            if act {
                y.iter_mut().for_each(|v| *v = elu(*v));
            }
            cache.inputs.push(x);
            x = y.clone();
            cache.outputs.push(y);
        }
        (x, cache)
    }

    pub fn backward(&self, p: &[f64], cache: &MlpCache, dout: Vec<f64>, batch: usize, grad: &mut [f64]) -> Vec<f64> {
        let mut d = dout;
        for (i, &(w, b, nin, nout, act)) in self.layers.iter().enumerate().rev() {
            if act {
                for (g, y) in d.iter_mut().zip(&cache.outputs[i]) {
                    if *y <= 0.0 {
                        *g *= y + 1.0;
                    }
                }
            }
            let (gw, gb) = split_pair(grad, w, nin * nout, b, nout);
            d = affine_backward(&p[w..w + nin * nout], &cache.inputs[i], &d, batch, nin, nout, gw, Some(gb));
        }
        d
    }
}

/// Two disjoint mutable windows of the gradient vector.
fn split_pair(g: &mut [f64], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [f64], &mut [f64]) {
    assert!(a + alen <= b, "blocks must be ordered and disjoint");
    let (lo, hi) = g.split_at_mut(b);
    (&mut lo[a..a + alen], &mut hi[..blen])
}

#[derive(Debug, Clone, Default)]
pub(crate) struct GruCache {
    pub u: Vec<f64>,
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    pub gh_n: Vec<f64>,
}

/// `h' = (1 − z) ⊙ n + z ⊙ h` with gates in the order r, z, n.
pub(crate) fn gru_forward(l: &Layout, p: &[f64], u: Vec<f64>, h: Vec<f64>, batch: usize) -> (Vec<f64>, GruCache) {
    let hd = l.hidden;
    let gx = affine(&p[l.gru_wx..l.gru_wx + 3 * hd * hd], &p[l.gru_b..l.gru_b + 3 * hd], &u, batch, hd, 3 * hd);
    let mut gh = vec![0.0; batch * 3 * hd];
    gemm_abt(&h, &p[l.gru_uh..l.gru_uh + 3 * hd * hd], &mut gh, batch, hd, 3 * hd, 0.0);
    let mut c = GruCache {
        r: vec![0.0; batch * hd],
        z: vec![0.0; batch * hd],
        n: vec![0.0; batch * hd],
        gh_n: vec![0.0; batch * hd],
        ..Default::default()
    };
    let mut out = vec![0.0; batch * hd];
    for b in 0..batch {
        let (x, g) = (&gx[b * 3 * hd..], &gh[b * 3 * hd..]);
        for i in 0..hd {
            let k = b * hd + i;
            let r = sigmoid(x[i] + g[i]);
            let z = sigmoid(x[hd + i] + g[hd + i]);
            let n = (x[2 * hd + i] + r * g[2 * hd + i]).tanh();
            c.r[k] = r;
            c.z[k] = z;
            c.n[k] = n;
            c.gh_n[k] = g[2 * hd + i];
            out[k] = (1.0 - z) * n + z * h[k];
        }
    }
    c.u = u;
    c.h = h;
    (out, c)
}

/// Returns `(du, dh)` and accumulates parameter gradients.
pub(crate) fn gru_backward(l: &Layout, p: &[f64], c: &GruCache, dout: &[f64], batch: usize, grad: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
    let hd = l.hidden;
    let mut dgx = vec![0.0; batch * 3 * hd];
    let mut dgh = vec![0.0; batch * 3 * hd];
    let mut dh = vec![0.0; batch * hd];
    for b in 0..batch {
        for i in 0..hd {
            let k = b * hd + i;
            let (r, z, n) = (c.r[k], c.z[k], c.n[k]);
            let d = dout[k];
            let dn = d * (1.0 - z);
            let dz = d * (c.h[k] - n);
            dh[k] = d * z;
            let dpre_n = dn * (1.0 - n * n);
            let dr = dpre_n * c.gh_n[k];
            let dpre_r = dr * r * (1.0 - r);
            let dpre_z = dz * z * (1.0 - z);
            let row = b * 3 * hd;
            dgx[row + i] = dpre_r;
            dgx[row + hd + i] = dpre_z;
            dgx[row + 2 * hd + i] = dpre_n;
            dgh[row + i] = dpre_r;
            dgh[row + hd + i] = dpre_z;
            dgh[row + 2 * hd + i] = dpre_n * r;
        }
    }
    let wlen = 3 * hd * hd;
    let du = {
        let (gw, gb) = split_pair(grad, l.gru_wx, wlen, l.gru_b, 3 * hd);
        affine_backward(&p[l.gru_wx..l.gru_wx + wlen], &c.u, &dgx, batch, hd, 3 * hd, gw, Some(gb))
    };
    let dh_u = affine_backward(
        &p[l.gru_uh..l.gru_uh + wlen],
        &c.h,
        &dgh,
        batch,
        hd,
        3 * hd,
        &mut grad[l.gru_uh..l.gru_uh + wlen],
        None,
    );
    for (a, b) in dh.iter_mut().zip(dh_u) {
        *a += b;
    }
    (du, dh)
}

/// Forward straight-through output: argmax one-hot per row of `C` logits
/// (first maximum on ties).
pub fn straight_through_forward(logits: &[f64], categories: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (row, o) in logits.chunks(categories).zip(out.chunks_mut(categories)) {
        let mut best = 0;
        for (i, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = i;
            }
        }
        o[best] = 1.0;
    }
    out
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Backward straight-through: the softmax Jacobian-vector product
/// `p ⊙ (g − pᵀg)` per row.
pub fn straight_through_backward(logits: &[f64], grad_out: &[f64], categories: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for (row, g) in logits.chunks(categories).zip(grad_out.chunks(categories)) {
        let p = softmax(row);
        let pg: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        out.extend(p.iter().zip(g).map(|(pi, gi)| pi * (gi - pg)));
    }
    out
}
