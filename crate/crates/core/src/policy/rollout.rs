//! Policy rollouts over pathwise samples and their exact reverse pass.
//!
//! The observed history primes the hidden state (batch of one). That state
//! is broadcast to one column per path; the decoder proposes the next query
//! `x_{t+1}` (identical for all paths), each path answers with
//! `y = f^τ(x)`, and the recurrence continues for `L` lookahead queries. One
//! further decoder output is the per-path action `a^τ`. The objective is
//! `(1/r) Σ_τ [−f^τ(a^τ) + λ c(x_t → x_{t+1} → … → a^τ)]` with the soft
//! spotlight wall inside `c`.

use rayon::prelude::*;

use super::network::{
    gru_backward, gru_forward, sigmoid, straight_through_backward, straight_through_forward, GruCache, Head, Layout,
    Mlp, MlpCache, PolicyParams, DISCRETE_EMBEDDING,
};
use crate::costs::CostModel;
use crate::domain::DiscreteDomain;
use crate::error::{Error, Result};
use crate::pathwise::PathBatch;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutOptions {
    pub horizon: usize,
    /// Drop the `−f(a)` term from the gradient (its value is still reported).
    pub detach_loss: bool,
    /// Drop the cost term from the gradient.
    pub detach_cost: bool,
    /// Replace the first proposed query by this point in every column.
    pub forced_first: Option<Vec<f64>>,
    /// Free per-path action logits (`r × output`) used instead of the
    /// decoder's final output.
    pub action_logits: Option<Vec<f64>>,
    /// Imitation targets for warm-up: `(L+1) × dim` points shared by every
    /// path and a weight. Adds `w · mean_τ Σ_s ‖x_s − g_s‖²` to the
    /// objective.
    pub guide: Option<(Vec<Vec<f64>>, f64)>,
}

/// Everything the reverse pass needs.
#[derive(Debug, Clone)]
pub struct Tape {
    warm: Vec<(Vec<f64>, MlpCache, GruCache)>,
    dec: Vec<MlpCache>,
    logits: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    enc: Vec<MlpCache>,
    gru: Vec<GruCache>,
    /// `∇f^τ` at each lookahead query, `B × dim` per step.
    path_grads: Vec<Vec<f64>>,
    /// `∂objective/∂x` from the loss and cost terms, `B × dim` per step.
    direct_grads: Vec<Vec<f64>>,
    forced: bool,
    free_actions: bool,
    batch: usize,
}

#[derive(Debug, Clone)]
pub struct RolloutResult {
    /// `r × L × dim`.
    pub lookahead_x: Vec<Vec<Vec<f64>>>,
    /// `r × L`.
    pub lookahead_y: Vec<Vec<f64>>,
    /// `r × dim`.
    pub actions: Vec<Vec<f64>>,
    /// `r × (L+1)` soft step costs.
    pub step_costs: Vec<Vec<f64>>,
    /// Per-path bracket `−f^τ(a^τ) + λ c^τ`.
    pub path_objectives: Vec<f64>,
    pub objective: f64,
    /// Distinct function samples touched by the rollout.
    pub n_trajectories: usize,
    pub tape: Tape,
}

impl RolloutResult {
    /// The first lookahead query (shared by every path), or the action when
    /// the horizon is zero.
    pub fn first_query(&self) -> &[f64] {
        match self.lookahead_x.first().and_then(|p| p.first()) {
            Some(x) => x,
            None => &self.actions[0],
        }
    }
}

/// How a network output is read as a point.
#[derive(Debug, Clone, Copy)]
enum Codec {
    Continuous { dim: usize },
    Discrete(DiscreteDomain),
}

impl Codec {
    fn new(params: &PolicyParams) -> Self {
        match params.head {
            Head::Continuous => Self::Continuous { dim: params.dim },
            Head::Discrete { categories } => Self::Discrete(DiscreteDomain {
                dims: params.dim,
                categories,
            }),
        }
    }

    fn out_len(&self) -> usize {
        match self {
            Self::Continuous { dim } => *dim,
            Self::Discrete(d) => d.dims * d.categories,
        }
    }

    /// Network representation of a point in `[0,1]^dim`.
    fn encode(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Continuous { .. } => x.to_vec(),
            Self::Discrete(d) => {
                let levels: Vec<usize> = x.iter().map(|&u| d.level_of(u)).collect();
                d.one_hot(&levels).expect("levels are in range")
            }
        }
    }

    fn coords(&self, o: &[f64]) -> Vec<f64> {
        match self {
            Self::Continuous { .. } => o.to_vec(),
            Self::Discrete(d) => o
                .chunks(d.categories)
                .map(|row| (0..d.categories).map(|c| row[c] * d.cell_center(c)).sum())
                .collect(),
        }
    }

    fn head_forward(&self, logits: &[f64]) -> Vec<f64> {
        match self {
            Self::Continuous { .. } => logits.iter().map(|v| sigmoid(*v)).collect(),
            Self::Discrete(d) => straight_through_forward(logits, d.categories),
        }
    }

    /// `∂/∂logits` from `∂/∂output` (row of one column).
    fn head_backward(&self, logits: &[f64], out: &[f64], dout: &[f64]) -> Vec<f64> {
        match self {
            Self::Continuous { .. } => out.iter().zip(dout).map(|(x, g)| g * x * (1.0 - x)).collect(),
            Self::Discrete(d) => straight_through_backward(logits, dout, d.categories),
        }
    }

    /// `∂/∂output` from `∂/∂coords`.
    fn coords_backward(&self, dcoords: &[f64]) -> Vec<f64> {
        match self {
            Self::Continuous { .. } => dcoords.to_vec(),
            Self::Discrete(d) => dcoords
                .iter()
                .flat_map(|g| (0..d.categories).map(move |c| g * d.cell_center(c)))
                .collect(),
        }
    }
}

/// Encoder input rows `[repr(x), y]` for a batch.
fn embed_inputs(l: &Layout, p: &[f64], outputs: &[f64], ys: &[f64]) -> Vec<f64> {
    let batch = ys.len();
    let olen = outputs.len() / batch;
    let mut e = Vec::with_capacity(batch * l.input);
    for b in 0..batch {
        let o = &outputs[b * olen..(b + 1) * olen];
        match l.head {
            Head::Continuous => e.extend_from_slice(o),
            Head::Discrete { categories } => {
                let emb = &p[l.emb..l.emb + DISCRETE_EMBEDDING * categories];
                for k in 0..DISCRETE_EMBEDDING {
                    let row = &emb[k * categories..(k + 1) * categories];
                    e.push(o.chunks(categories).map(|oh| oh.iter().zip(row).map(|(a, w)| a * w).sum::<f64>()).sum());
                }
            }
        }
        e.push(ys[b]);
    }
    e
}

/// Splits the encoder-input gradient into `(∂/∂output, ∂/∂y)` and
/// accumulates the embedding gradient.
fn embed_backward(l: &Layout, p: &[f64], outputs: &[f64], de: &[f64], batch: usize, grad: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
    let olen = outputs.len() / batch;
    let mut dout = vec![0.0; outputs.len()];
    let mut dy = Vec::with_capacity(batch);
    for b in 0..batch {
        let row = &de[b * l.input..(b + 1) * l.input];
        dy.push(row[l.input - 1]);
        let o = &outputs[b * olen..(b + 1) * olen];
        let d = &mut dout[b * olen..(b + 1) * olen];
        match l.head {
            Head::Continuous => d.copy_from_slice(&row[..l.input - 1]),
            Head::Discrete { categories } => {
                for k in 0..DISCRETE_EMBEDDING {
                    let g = row[k];
                    let off = l.emb + k * categories;
                    for (dd, oh) in d.chunks_mut(categories).zip(o.chunks(categories)) {
                        for c in 0..categories {
                            dd[c] += g * p[off + c];
                            grad[off + c] += g * oh[c];
                        }
                    }
                }
            }
        }
    }
    (dout, dy)
}

/// Single recurrent step with batch one: feed `(x_prev, y_prev)`, update the
/// hidden state and decode the next query.
pub fn policy_step(params: &PolicyParams, hidden: &[f64], x_prev: &[f64], y_prev: f64) -> (Vec<f64>, Vec<f64>) {
    let l = params.layout();
    let p = &params.values;
    let codec = Codec::new(params);
    let e = embed_inputs(&l, p, &codec.encode(x_prev), &[y_prev]);
    let (u, _) = Mlp::encoder(&l).forward(p, e, 1);
    let (h, _) = gru_forward(&l, p, u, hidden.to_vec(), 1);
    let (logits, _) = Mlp::decoder(&l).forward(p, h.clone(), 1);
    (codec.coords(&codec.head_forward(&logits)), h)
}

/// Forward pass with tape. `cost_history` is the committed query trajectory
/// ending at the current position `x_t`; `history` supplies the
/// observations that prime the hidden state.
pub fn rollout(
    params: &PolicyParams,
    batch: &PathBatch,
    history: (&[Vec<f64>], &[f64]),
    cost_history: &[Vec<f64>],
    cost: &CostModel,
    opts: &RolloutOptions,
) -> Result<RolloutResult> {
    let l = params.layout();
    let p = &params.values;
    let codec = Codec::new(params);
    let (hx, hy) = history;
    let dim = params.dim;
    if batch.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: batch.dim(),
        });
    }
    if cost_history.is_empty() {
        return Err(Error::Precondition("rollout needs the current position".into()));
    }
    let enc = Mlp::encoder(&l);
    let dec = Mlp::decoder(&l);
    let hd = l.hidden;

    let mut warm = Vec::with_capacity(hx.len());
    let mut h = vec![0.0; hd];
    for (x, &y) in hx.iter().zip(hy) {
        let repr = codec.encode(x);
        let e = embed_inputs(&l, p, &repr, &[y]);
        let (u, ec) = enc.forward(p, e, 1);
        let (hn, gc) = gru_forward(&l, p, u, h, 1);
        warm.push((repr, ec, gc));
        h = hn;
    }

    let r = batch.n_paths();
    let horizon = opts.horizon;
    let mut hb: Vec<f64> = (0..r).flat_map(|_| h.iter().copied()).collect();
    let olen = codec.out_len();
    let forced = opts.forced_first.as_ref().map(|x| codec.encode(x));
    let mut tape_dec = Vec::with_capacity(horizon + 1);
    let mut tape_logits = Vec::with_capacity(horizon + 1);
    let mut tape_out = Vec::with_capacity(horizon + 1);
    let mut tape_enc = Vec::with_capacity(horizon);
    let mut tape_gru = Vec::with_capacity(horizon);
    let mut path_grads = Vec::with_capacity(horizon);
    let mut coords: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(horizon + 1); r];
    let mut lookahead_y = vec![Vec::with_capacity(horizon); r];
    let mut action_vals = vec![0.0; r];
    let mut action_grads = vec![0.0; r * dim];

    for step in 0..=horizon {
        let (logits, dc) = match (&opts.action_logits, step == horizon) {
            (Some(a), true) => {
                if a.len() != r * olen {
                    return Err(Error::DimensionMismatch {
                        expected: r * olen,
                        got: a.len(),
                    });
                }
                (a.clone(), MlpCache::default())
            }
            _ => dec.forward(p, hb.clone(), r),
        };
        let mut out = Vec::with_capacity(r * olen);
        for b in 0..r {
            match (&forced, step) {
                (Some(f), 0) => out.extend_from_slice(f),
                _ => out.extend(codec.head_forward(&logits[b * olen..(b + 1) * olen])),
            }
        }
        let xs: Vec<Vec<f64>> = out.chunks(olen).map(|o| codec.coords(o)).collect();
        let evals: Vec<(f64, Vec<f64>)> = (0..r)
            .into_par_iter()
            .map(|tau| {
                let mut g = vec![0.0; dim];
                let v = batch.value_grad(tau, &xs[tau], &mut g);
                (v, g)
            })
            .collect();
        for (tau, (v, _)) in evals.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numerical(format!("path {tau} returned {v} at {:?}", xs[tau])));
            }
        }
        for (tau, x) in xs.into_iter().enumerate() {
            coords[tau].push(x);
        }
        tape_dec.push(dc);
        tape_logits.push(logits);
        if step < horizon {
            let ys: Vec<f64> = evals.iter().map(|(v, _)| *v).collect();
            for (tau, y) in ys.iter().enumerate() {
                lookahead_y[tau].push(*y);
            }
            path_grads.push(evals.into_iter().flat_map(|(_, g)| g).collect::<Vec<f64>>());
            let e = embed_inputs(&l, p, &out, &ys);
            let (u, ec) = enc.forward(p, e, r);
            let (hn, gc) = gru_forward(&l, p, u, hb, r);
            tape_enc.push(ec);
            tape_gru.push(gc);
            hb = hn;
        } else {
            for (tau, (v, g)) in evals.into_iter().enumerate() {
                action_vals[tau] = v;
                action_grads[tau * dim..(tau + 1) * dim].copy_from_slice(&g);
            }
        }
        tape_out.push(out);
    }

    let scale = 1.0 / r as f64;
    let mut direct_grads = vec![vec![0.0; r * dim]; horizon + 1];
    let mut step_costs = Vec::with_capacity(r);
    let mut path_objectives = Vec::with_capacity(r);
    for tau in 0..r {
        let pts: Vec<&[f64]> = coords[tau].iter().map(Vec::as_slice).collect();
        let (per_step, cg) = cost.soft_trajectory_terms(cost_history, &pts);
        let c: f64 = per_step.iter().sum();
        step_costs.push(per_step);
        path_objectives.push(-action_vals[tau] + cost.lambda * c);
        if !opts.detach_cost {
            for (s, g) in cg.iter().enumerate() {
                for i in 0..dim {
                    direct_grads[s][tau * dim + i] += scale * cost.lambda * g[i];
                }
            }
        }
        if !opts.detach_loss {
            for i in 0..dim {
                direct_grads[horizon][tau * dim + i] -= scale * action_grads[tau * dim + i];
            }
        }
    }
    if let Some((targets, w)) = &opts.guide {
        if targets.len() != horizon + 1 || targets.iter().any(|g| g.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: (horizon + 1) * dim,
                got: targets.iter().map(Vec::len).sum(),
            });
        }
        for tau in 0..r {
            let mut pen = 0.0;
            for (s, g) in targets.iter().enumerate() {
                for i in 0..dim {
                    let d = coords[tau][s][i] - g[i];
                    pen += d * d;
                    direct_grads[s][tau * dim + i] += scale * 2.0 * w * d;
                }
            }
            path_objectives[tau] += w * pen;
        }
    }
    let objective = path_objectives.iter().sum::<f64>() * scale;
    if !objective.is_finite() {
        return Err(Error::Numerical(format!("rollout objective is {objective}")));
    }

    let lookahead_x = coords.iter().map(|c| c[..horizon].to_vec()).collect();
    let actions = coords.iter().map(|c| c[horizon].clone()).collect();
    Ok(RolloutResult {
        lookahead_x,
        lookahead_y,
        actions,
        step_costs,
        path_objectives,
        objective,
        n_trajectories: r,
        tape: Tape {
            warm,
            dec: tape_dec,
            logits: tape_logits,
            outputs: tape_out,
            enc: tape_enc,
            gru: tape_gru,
            path_grads,
            direct_grads,
            forced: forced.is_some(),
            free_actions: opts.action_logits.is_some(),
            batch: r,
        },
    })
}

/// Exact gradient of `result.objective` with respect to every parameter.
pub fn backward(result: &RolloutResult, params: &PolicyParams) -> Vec<f64> {
    backward_full(result, params).0
}

/// Parameter gradient plus, when free action logits were used, the
/// gradient with respect to those logits.
pub fn backward_full(result: &RolloutResult, params: &PolicyParams) -> (Vec<f64>, Option<Vec<f64>>) {
    let l = params.layout();
    let p = &params.values;
    let codec = Codec::new(params);
    let t = &result.tape;
    let r = t.batch;
    let dim = params.dim;
    let hd = l.hidden;
    let olen = codec.out_len();
    let horizon = t.enc.len();
    let enc = Mlp::encoder(&l);
    let dec = Mlp::decoder(&l);
    let mut grad = vec![0.0; p.len()];
    let mut action_grad = None;

    let mut dh_next = vec![0.0; r * hd];
    for step in (0..=horizon).rev() {
        let mut dcoords = t.direct_grads[step].clone();
        let mut dout = vec![0.0; r * olen];
        let mut dh = vec![0.0; r * hd];
        if step < horizon {
            let (du, dh_gru) = gru_backward(&l, p, &t.gru[step], &dh_next, r, &mut grad);
            dh = dh_gru;
            let de = enc.backward(p, &t.enc[step], du, r, &mut grad);
            let (d_o, dy) = embed_backward(&l, p, &t.outputs[step], &de, r, &mut grad);
            dout = d_o;
            let pg = &t.path_grads[step];
            for b in 0..r {
                for i in 0..dim {
                    dcoords[b * dim + i] += dy[b] * pg[b * dim + i];
                }
            }
        }
        if step == 0 && t.forced {
            dh_next = dh;
            break;
        }
        let mut dlogits = Vec::with_capacity(r * olen);
        for b in 0..r {
            let extra = codec.coords_backward(&dcoords[b * dim..(b + 1) * dim]);
            let d_o: Vec<f64> = dout[b * olen..(b + 1) * olen].iter().zip(&extra).map(|(a, c)| a + c).collect();
            let range = b * olen..(b + 1) * olen;
            dlogits.extend(codec.head_backward(&t.logits[step][range.clone()], &t.outputs[step][range], &d_o));
        }
        if step == horizon && t.free_actions {
            action_grad = Some(dlogits);
            dh_next = dh;
            continue;
        }
        let dh_dec = dec.backward(p, &t.dec[step], dlogits, r, &mut grad);
        for (a, b) in dh.iter_mut().zip(dh_dec) {
            *a += b;
        }
        dh_next = dh;
    }

    let mut dh: Vec<f64> = vec![0.0; hd];
    for b in 0..r {
        for i in 0..hd {
            dh[i] += dh_next[b * hd + i];
        }
    }
    for (repr, ec, gc) in t.warm.iter().rev() {
        let (du, dprev) = gru_backward(&l, p, gc, &dh, 1, &mut grad);
        let de = enc.backward(p, ec, du, 1, &mut grad);
        embed_backward(&l, p, repr, &de, 1, &mut grad);
        dh = dprev;
    }
    (grad, action_grad)
}
