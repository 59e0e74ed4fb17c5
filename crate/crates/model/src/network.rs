//! Forward and backward passes: bidirectional LSTM encoder, attention of
//! each number over all tokens, and a three-layer generator per number.

use thiserror::Error;

use crate::linalg::{add_assign, dot, gemv_acc, gemv_t_acc, outer_acc, sigmoid, softmax};
use crate::params::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("empty token sequence")]
    EmptySequence,
    #[error("number position {position} outside a {len}-token sequence")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("two numbers share token position {0}")]
    DuplicatePosition(usize),
    #[error("token id {0} outside the embedding table")]
    UnknownTokenId(usize),
    #[error("vector {index} has {got} dimensions, expected {want}")]
    ShapeMismatch {
        index: usize,
        got: usize,
        want: usize,
    },
}

/// Encoder output `H`, one row of width `2d` per token.
#[derive(Debug, Clone, PartialEq)]
pub struct Hidden {
    pub width: usize,
    pub data: Vec<f64>,
}

impl Hidden {
    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }
}

#[derive(Debug, Clone, Copy)]
struct Dims {
    d: usize,
    da: usize,
    h1: usize,
    h2: usize,
    l: usize,
}

fn dims(p: &Params) -> Dims {
    Dims {
        d: p.groups[FWD_WH].cols,
        da: p.groups[ATTN_U].rows,
        h1: p.groups[GEN_B1].rows,
        h2: p.groups[GEN_B2].rows,
        l: p.groups[GEN_B3].rows,
    }
}

struct LstmStep {
    token: usize,
    /// Activated gates `i, f, g, o`, each of width `d`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

struct Lstm {
    wx: usize,
    wh: usize,
    b: usize,
}

const FORWARD: Lstm = Lstm {
    wx: FWD_WX,
    wh: FWD_WH,
    b: FWD_B,
};
const BACKWARD: Lstm = Lstm {
    wx: BWD_WX,
    wh: BWD_WH,
    b: BWD_B,
};

fn embedding(p: &Params, token: usize) -> &[f64] {
    let e = &p.groups[EMBEDDING];
    &e.data[token * e.cols..(token + 1) * e.cols]
}

/// Runs one direction over `tokens` in the given order.
fn lstm_forward(p: &Params, cell: &Lstm, tokens: impl Iterator<Item = usize>) -> Vec<LstmStep> {
    let d = p.groups[cell.wh].cols;
    let (wx, wh, b) = (&p.groups[cell.wx], &p.groups[cell.wh], &p.groups[cell.b]);
    let mut h_prev = vec![0.0; d];
    let mut c_prev = vec![0.0; d];
    let mut steps = Vec::new();
    for token in tokens {
        let mut a = b.data.clone();
        gemv_acc(&mut a, &wx.data, wx.cols, 0, embedding(p, token));
        gemv_acc(&mut a, &wh.data, wh.cols, 0, &h_prev);
        for (k, x) in a.iter_mut().enumerate() {
            *x = if (2 * d..3 * d).contains(&k) {
                x.tanh()
            } else {
                sigmoid(*x)
            };
        }
        let mut c = vec![0.0; d];
        for j in 0..d {
            c[j] = a[d + j] * c_prev[j] + a[j] * a[2 * d + j];
        }
        let tanh_c: Vec<f64> = c.iter().map(|x| x.tanh()).collect();
        let h: Vec<f64> = (0..d).map(|j| a[3 * d + j] * tanh_c[j]).collect();
        h_prev.clone_from(&h);
        c_prev.clone_from(&c);
        steps.push(LstmStep {
            token,
            gates: a,
            c,
            tanh_c,
            h,
        });
    }
    steps
}

/// Backpropagates `dh[k]` (gradient on the output of step `k`, in
/// processing order) through one direction.
fn lstm_backward(p: &Params, cell: &Lstm, steps: &[LstmStep], dh: &[Vec<f64>], g: &mut Params) {
    let d = p.groups[cell.wh].cols;
    let de = p.groups[EMBEDDING].cols;
    let mut dh_next = vec![0.0; d];
    let mut dc_next = vec![0.0; d];
    let mut da = vec![0.0; 4 * d];
    let zeros = vec![0.0; d];
    for k in (0..steps.len()).rev() {
        let s = &steps[k];
        let (c_prev, h_prev) = if k == 0 {
            (&zeros, &zeros)
        } else {
            (&steps[k - 1].c, &steps[k - 1].h)
        };
        let gt = &s.gates;
        for j in 0..d {
            let dhj = dh[k][j] + dh_next[j];
            let (i, f, gg, o) = (gt[j], gt[d + j], gt[2 * d + j], gt[3 * d + j]);
            let dc = dc_next[j] + dhj * o * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
            da[j] = dc * gg * i * (1.0 - i);
            da[d + j] = dc * c_prev[j] * f * (1.0 - f);
            da[2 * d + j] = dc * i * (1.0 - gg * gg);
            da[3 * d + j] = dhj * s.tanh_c[j] * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let x = embedding(p, s.token);
        outer_acc(&mut g.groups[cell.wx].data, de, 0, &da, x);
        outer_acc(&mut g.groups[cell.wh].data, d, 0, &da, h_prev);
        add_assign(&mut g.groups[cell.b].data, &da);
        let ge = &mut g.groups[EMBEDDING].data[s.token * de..(s.token + 1) * de];
        gemv_t_acc(ge, &p.groups[cell.wx].data, de, 0, &da);
        dh_next.iter_mut().for_each(|x| *x = 0.0);
        gemv_t_acc(&mut dh_next, &p.groups[cell.wh].data, d, 0, &da);
    }
}

struct Encoded {
    fwd: Vec<LstmStep>,
    /// Processing order, i.e. `bwd[k]` sits at position `n - 1 - k`.
    bwd: Vec<LstmStep>,
    hidden: Hidden,
}

fn encode(p: &Params, tokens: &[usize]) -> Result<Encoded, NetworkError> {
    if tokens.is_empty() {
        return Err(NetworkError::EmptySequence);
    }
    let vocab = p.groups[EMBEDDING].rows;
    if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab) {
        return Err(NetworkError::UnknownTokenId(bad));
    }
    let n = tokens.len();
    let fwd = lstm_forward(p, &FORWARD, tokens.iter().copied());
    let bwd = lstm_forward(p, &BACKWARD, tokens.iter().rev().copied());
    let d = p.groups[FWD_WH].cols;
    let mut data = Vec::with_capacity(n * 2 * d);
    for t in 0..n {
        data.extend_from_slice(&fwd[t].h);
        data.extend_from_slice(&bwd[n - 1 - t].h);
    }
    Ok(Encoded {
        fwd,
        bwd,
        hidden: Hidden { width: 2 * d, data },
    })
}

/// Bidirectional encoding `h_t = [→h_t, ←h_t]` of a token-id sequence.
pub fn encode_problem(p: &Params, tokens: &[usize]) -> Result<Hidden, NetworkError> {
    encode(p, tokens).map(|e| e.hidden)
}

/// Number representations `e_i = H[q_i]`.
pub fn number_repr(h: &Hidden, positions: &[usize]) -> Result<Vec<Vec<f64>>, NetworkError> {
    let mut seen = std::collections::HashSet::new();
    positions
        .iter()
        .map(|&q| {
            if q >= h.len() {
                return Err(NetworkError::PositionOutOfRange {
                    position: q,
                    len: h.len(),
                });
            }
            if !seen.insert(q) {
                return Err(NetworkError::DuplicatePosition(q));
            }
            Ok(h.row(q).to_vec())
        })
        .collect()
}

/// `W_h h_t` for every token, shared by all numbers of a problem.
fn token_projections(p: &Params, h: &Hidden) -> Vec<Vec<f64>> {
    let w = &p.groups[ATTN_W];
    (0..h.len())
        .map(|t| {
            let mut v = vec![0.0; w.rows];
            gemv_acc(&mut v, &w.data, w.cols, h.width, h.row(t));
            v
        })
        .collect()
}

struct AttnCache {
    /// `tanh(W[e, h_t])` per token.
    u: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    context: Vec<f64>,
}

fn attend_cached(p: &Params, h: &Hidden, proj: &[Vec<f64>], e: &[f64]) -> AttnCache {
    let w = &p.groups[ATTN_W];
    let uvec = &p.groups[ATTN_U].data;
    let mut q = vec![0.0; w.rows];
    gemv_acc(&mut q, &w.data, w.cols, 0, e);
    let u: Vec<Vec<f64>> = proj
        .iter()
        .map(|pt| q.iter().zip(pt).map(|(a, b)| (a + b).tanh()).collect())
        .collect();
    let scores: Vec<f64> = u.iter().map(|ut| dot(uvec, ut)).collect();
    let alpha = softmax(&scores);
    let mut context = vec![0.0; h.width];
    for (t, &a) in alpha.iter().enumerate() {
        for (c, x) in context.iter_mut().zip(h.row(t)) {
            *c += a * x;
        }
    }
    AttnCache { u, alpha, context }
}

/// Attention weights `α_t = softmax_t(Uᵀ tanh(W[e, h_t]))` and the context
/// `Σ_t α_t h_t`.
pub fn attend(p: &Params, h: &Hidden, e: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let c = attend_cached(p, h, &token_projections(p, h), e);
    (c.alpha, c.context)
}

struct GenCache {
    z: Vec<f64>,
    pre1: Vec<f64>,
    a1: Vec<f64>,
    pre2: Vec<f64>,
    a2: Vec<f64>,
    out: Vec<f64>,
}

fn layer(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    let mut y = b.data.clone();
    gemv_acc(&mut y, &w.data, w.cols, 0, x);
    y
}

fn generate_cached(p: &Params, act: Activation, z: Vec<f64>) -> GenCache {
    let g = &p.groups;
    let pre1 = layer(&g[GEN_W1], &g[GEN_B1], &z);
    let a1: Vec<f64> = pre1.iter().map(|&x| act.apply(x)).collect();
    let pre2 = layer(&g[GEN_W2], &g[GEN_B2], &a1);
    let a2: Vec<f64> = pre2.iter().map(|&x| act.apply(x)).collect();
    let out = layer(&g[GEN_W3], &g[GEN_B3], &a2);
    GenCache {
        z,
        pre1,
        a1,
        pre2,
        a2,
        out,
    }
}

/// Generator `W3 σ(W2 σ(W1 z + B1) + B2) + B3` on `z = [E_i, e_i]`.
pub fn generate(p: &Params, act: Activation, z: &[f64]) -> Vec<f64> {
    generate_cached(p, act, z.to_vec()).out
}

/// `Σ_i (1/l) Σ_j (c_ij − c'_ij)²`.
pub fn mse_loss(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64, NetworkError> {
    if predictions.len() != targets.len() {
        return Err(NetworkError::ShapeMismatch {
            index: predictions.len().min(targets.len()),
            got: predictions.len(),
            want: targets.len(),
        });
    }
    let mut total = 0.0;
    for (i, (p, t)) in predictions.iter().zip(targets).enumerate() {
        if p.len() != t.len() {
            return Err(NetworkError::ShapeMismatch {
                index: i,
                got: p.len(),
                want: t.len(),
            });
        }
        let sq: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        total += sq / p.len() as f64;
    }
    Ok(total)
}

/// Predicted real-valued code vector per number.
pub fn forward(
    p: &Params,
    act: Activation,
    tokens: &[usize],
    positions: &[usize],
) -> Result<Vec<Vec<f64>>, NetworkError> {
    let enc = encode(p, tokens)?;
    let reprs = number_repr(&enc.hidden, positions)?;
    let proj = token_projections(p, &enc.hidden);
    Ok(reprs
        .into_iter()
        .map(|e| {
            let attn = attend_cached(p, &enc.hidden, &proj, &e);
            let mut z = attn.context;
            z.extend_from_slice(&e);
            generate_cached(p, act, z).out
        })
        .collect())
}

/// Loss of one problem; adds its gradient into `grad`.
pub fn loss_and_grad(
    p: &Params,
    act: Activation,
    tokens: &[usize],
    positions: &[usize],
    targets: &[Vec<f64>],
    grad: &mut Params,
) -> Result<f64, NetworkError> {
    let dm = dims(p);
    let enc = encode(p, tokens)?;
    let h = &enc.hidden;
    let n = h.len();
    let reprs = number_repr(h, positions)?;
    if targets.len() != reprs.len() {
        return Err(NetworkError::ShapeMismatch {
            index: 0,
            got: reprs.len(),
            want: targets.len(),
        });
    }
    let proj = token_projections(p, h);
    let two_d = 2 * dm.d;
    let mut dh = vec![0.0; n * two_d];
    // Σ over numbers of the gradient on W_h h_t, per token.
    let mut dproj = vec![vec![0.0; dm.da]; n];
    let mut total = 0.0;
    let uvec = &p.groups[ATTN_U].data;
    let w_attn = &p.groups[ATTN_W];

    for ((&q, e), target) in positions.iter().zip(&reprs).zip(targets) {
        if target.len() != dm.l {
            return Err(NetworkError::ShapeMismatch {
                index: q,
                got: target.len(),
                want: dm.l,
            });
        }
        let attn = attend_cached(p, h, &proj, e);
        let mut z = attn.context.clone();
        z.extend_from_slice(e);
        let gc = generate_cached(p, act, z);

        let inv_l = 1.0 / dm.l as f64;
        let mut dout = vec![0.0; dm.l];
        let mut sq = 0.0;
        for j in 0..dm.l {
            let r = gc.out[j] - target[j];
            sq += r * r;
            dout[j] = 2.0 * r * inv_l;
        }
        total += sq / dm.l as f64;

        // Generator.
        let gg = &mut grad.groups;
        outer_acc(&mut gg[GEN_W3].data, dm.h2, 0, &dout, &gc.a2);
        add_assign(&mut gg[GEN_B3].data, &dout);
        let mut da2 = vec![0.0; dm.h2];
        gemv_t_acc(&mut da2, &p.groups[GEN_W3].data, dm.h2, 0, &dout);
        let dpre2: Vec<f64> = (0..dm.h2)
            .map(|k| da2[k] * act.derivative(gc.pre2[k], gc.a2[k]))
            .collect();
        outer_acc(&mut gg[GEN_W2].data, dm.h1, 0, &dpre2, &gc.a1);
        add_assign(&mut gg[GEN_B2].data, &dpre2);
        let mut da1 = vec![0.0; dm.h1];
        gemv_t_acc(&mut da1, &p.groups[GEN_W2].data, dm.h1, 0, &dpre2);
        let dpre1: Vec<f64> = (0..dm.h1)
            .map(|k| da1[k] * act.derivative(gc.pre1[k], gc.a1[k]))
            .collect();
        outer_acc(&mut gg[GEN_W1].data, 2 * two_d, 0, &dpre1, &gc.z);
        add_assign(&mut gg[GEN_B1].data, &dpre1);
        let mut dz = vec![0.0; 2 * two_d];
        gemv_t_acc(&mut dz, &p.groups[GEN_W1].data, 2 * two_d, 0, &dpre1);
        let (dctx, de_direct) = dz.split_at(two_d);
        let mut de = de_direct.to_vec();

        // Attention.
        let dalpha: Vec<f64> = (0..n).map(|t| dot(dctx, h.row(t))).collect();
        let mean: f64 = attn.alpha.iter().zip(&dalpha).map(|(a, b)| a * b).sum();
        let mut dq = vec![0.0; dm.da];
        for t in 0..n {
            let a = attn.alpha[t];
            for (x, y) in dh[t * two_d..(t + 1) * two_d].iter_mut().zip(dctx) {
                *x += a * y;
            }
            let ds = a * (dalpha[t] - mean);
            if ds == 0.0 {
                continue;
            }
            let ut = &attn.u[t];
            for k in 0..dm.da {
                gg[ATTN_U].data[k] += ds * ut[k];
                let dpre = ds * uvec[k] * (1.0 - ut[k] * ut[k]);
                dq[k] += dpre;
                dproj[t][k] += dpre;
            }
        }
        outer_acc(&mut gg[ATTN_W].data, w_attn.cols, 0, &dq, e);
        gemv_t_acc(&mut de, &w_attn.data, w_attn.cols, 0, &dq);
        add_assign(&mut dh[q * two_d..(q + 1) * two_d], &de);
    }

    for t in 0..n {
        outer_acc(
            &mut grad.groups[ATTN_W].data,
            w_attn.cols,
            two_d,
            &dproj[t],
            h.row(t),
        );
        gemv_t_acc(
            &mut dh[t * two_d..(t + 1) * two_d],
            &w_attn.data,
            w_attn.cols,
            two_d,
            &dproj[t],
        );
    }

    let d = dm.d;
    let dh_fwd: Vec<Vec<f64>> = (0..n)
        .map(|t| dh[t * two_d..t * two_d + d].to_vec())
        .collect();
    let dh_bwd: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let t = n - 1 - k;
            dh[t * two_d + d..(t + 1) * two_d].to_vec()
        })
        .collect();
    lstm_backward(p, &FORWARD, &enc.fwd, &dh_fwd, grad);
    lstm_backward(p, &BACKWARD, &enc.bwd, &dh_bwd, grad);
    Ok(total)
}
