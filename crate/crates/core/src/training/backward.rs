use rayon::prelude::*;

use crate::model::{forward_cached, gelu_grad, ActHook, Cache, LnCache, ModelParams, TensorId};
use crate::{Error, Result};

/// One training example in model precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub window: Vec<f64>,
    pub rr: Vec<f64>,
    pub label: usize,
}

impl Example {
    pub fn from_beat(b: &crate::dataset::BeatSample) -> Self {
        Self {
            window: b.window.iter().map(|&v| f64::from(v)).collect(),
            rr: b.rr_norm.iter().map(|&v| f64::from(v)).collect(),
            label: b.label.index(),
        }
    }
}

/// Gradients share the parameter layout.
pub type GradientSet = ModelParams;

/// Samples per work unit. Fixed so that the reduction order, and with it
/// every bit of the result, does not depend on the thread count.
const CHUNK: usize = 8;

/// `(loss, dloss/dlogits)` for softmax cross-entropy of one example.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / z).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Backward of `y = x W + b`: returns `dx`, accumulating `dW += x^T dy` and `db += sum(dy)`.
pub fn linear_backward(
    x: &[f64],
    dy: &[f64],
    w: &[f64],
    n_in: usize,
    n_out: usize,
    dw: &mut [f64],
    db: Option<&mut [f64]>,
) -> Vec<f64> {
    let rows = dy.len() / n_out;
    let mut dx = vec![0.0; rows * n_in];
    for r in 0..rows {
        let dyr = &dy[r * n_out..(r + 1) * n_out];
        let xr = &x[r * n_in..(r + 1) * n_in];
        for i in 0..n_in {
            let wi = &w[i * n_out..(i + 1) * n_out];
            let dwi = &mut dw[i * n_out..(i + 1) * n_out];
            let mut acc = 0.0;
            for o in 0..n_out {
                acc += dyr[o] * wi[o];
                dwi[o] += xr[i] * dyr[o];
            }
            dx[r * n_in + i] = acc;
        }
    }
    if let Some(db) = db {
        for r in 0..rows {
            for (b, d) in db.iter_mut().zip(&dy[r * n_out..(r + 1) * n_out]) {
                *b += d;
            }
        }
    }
    dx
}

/// Backward of per-row layer normalization: returns `dx`, accumulating the
/// gain and bias gradients.
pub fn layer_norm_backward(
    dy: &[f64],
    cache: &LnCache,
    g: &[f64],
    dg: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let width = g.len();
    let mut dx = vec![0.0; dy.len()];
    for (r, &rstd) in cache.rstd.iter().enumerate() {
        let dyr = &dy[r * width..(r + 1) * width];
        let xh = &cache.xhat[r * width..(r + 1) * width];
        let mut mean_d = 0.0;
        let mut mean_dx = 0.0;
        for e in 0..width {
            dg[e] += dyr[e] * xh[e];
            db[e] += dyr[e];
            let d = dyr[e] * g[e];
            mean_d += d;
            mean_dx += d * xh[e];
        }
        mean_d /= width as f64;
        mean_dx /= width as f64;
        for e in 0..width {
            dx[r * width + e] = rstd * (dyr[e] * g[e] - mean_d - xh[e] * mean_dx);
        }
    }
    dx
}

/// Backward of the attention core (scores, softmax, weighted values) given
/// the context gradient; returns `(dq, dk, dv)`.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs_all: &[f64],
    dctx: &[f64],
    seq: usize,
    width: usize,
    heads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = width / heads;
    let scale = 1.0 / (p as f64).sqrt();
    let mut dq = vec![0.0; seq * width];
    let mut dk = vec![0.0; seq * width];
    let mut dv = vec![0.0; seq * width];
    let mut dscore = vec![0.0; seq];
    for h in 0..heads {
        let cols = h * p..(h + 1) * p;
        for tq in 0..seq {
            let probs = &probs_all[(h * seq + tq) * seq..(h * seq + tq + 1) * seq];
            let dct = &dctx[tq * width + cols.start..tq * width + cols.end];
            let mut dot = 0.0;
            for u in 0..seq {
                let vu = &v[u * width + cols.start..u * width + cols.end];
                let dp: f64 = dct.iter().zip(vu).map(|(a, b)| a * b).sum();
                dscore[u] = dp;
                dot += probs[u] * dp;
                for (j, &d) in dct.iter().enumerate() {
                    dv[u * width + cols.start + j] += probs[u] * d;
                }
            }
            for u in 0..seq {
                let ds = probs[u] * (dscore[u] - dot) * scale;
                for j in cols.clone() {
                    dq[tq * width + j] += ds * k[u * width + j];
                    dk[u * width + j] += ds * q[tq * width + j];
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Reverse-mode pass for one example. Hooked tensors are treated as identity
/// (straight-through).
pub fn backward(params: &ModelParams, c: &Cache, dlogits: &[f64], grads: &mut GradientSet) {
    let cfg = params.config();
    let (e, hid, heads) = (cfg.embed_dim, cfg.hidden, cfg.heads);
    let s = cfg.seq_len();
    let rr_n = cfg.rr_features();
    let t = |id| params.tensor(id);

    macro_rules! lin {
        ($x:expr, $dy:expr, $w:ident, $b:ident, $n_in:expr, $n_out:expr) => {{
            let (dw, db) = grads.tensor_pair_mut(TensorId::$w, TensorId::$b);
            linear_backward($x, $dy, t(TensorId::$w), $n_in, $n_out, dw, Some(db))
        }};
    }
    macro_rules! ln {
        ($dy:expr, $cache:expr, $g:ident, $b:ident) => {{
            let (dg, db) = grads.tensor_pair_mut(TensorId::$g, TensorId::$b);
            layer_norm_backward($dy, $cache, t(TensorId::$g), dg, db)
        }};
    }

    let dconcat = lin!(&c.concat, dlogits, HeadW, HeadB, e + rr_n, cfg.classes);
    if rr_n > 0 {
        let dw = grads.tensor_mut(TensorId::RrW);
        linear_backward(&c.rr, &dconcat[e..], t(TensorId::RrW), rr_n, rr_n, dw, None);
    }
    let mut dln3 = vec![0.0; s * e];
    for tok in dln3.chunks_exact_mut(e) {
        for (d, &g) in tok.iter_mut().zip(&dconcat[..e]) {
            *d = g / s as f64;
        }
    }
    let dres2 = ln!(&dln3, &c.ln3_cache, Ln3G, Ln3B);

    let dff2: Vec<f64> = dres2
        .iter()
        .zip(&c.ff2)
        .map(|(d, &x)| d * gelu_grad(x))
        .collect();
    let dgelu1 = lin!(&c.gelu1, &dff2, Ff2W, Ff2B, hid, e);
    let dff1: Vec<f64> = dgelu1
        .iter()
        .zip(&c.ff1)
        .map(|(d, &x)| d * gelu_grad(x))
        .collect();
    let dln2 = lin!(&c.ln2, &dff1, Ff1W, Ff1B, e, hid);
    let dres1_ffn = ln!(&dln2, &c.ln2_cache, Ln2G, Ln2B);
    let dres1: Vec<f64> = dres2.iter().zip(&dres1_ffn).map(|(a, b)| a + b).collect();

    let dctx = lin!(&c.ctx, &dres1, Wo, Bo, e, e);
    let (dq, dk, dv) = attention_backward(&c.q, &c.k, &c.v, &c.probs, &dctx, s, e, heads);
    let dl_q = lin!(&c.ln1, &dq, Wq, Bq, e, e);
    let dl_k = lin!(&c.ln1, &dk, Wk, Bk, e, e);
    let dl_v = lin!(&c.ln1, &dv, Wv, Bv, e, e);
    let dln1: Vec<f64> = (0..s * e).map(|i| dl_q[i] + dl_k[i] + dl_v[i]).collect();
    let dembed_attn = ln!(&dln1, &c.ln1_cache, Ln1G, Ln1B);
    let dembed: Vec<f64> = dres1.iter().zip(&dembed_attn).map(|(a, b)| a + b).collect();

    let (dcw, rest) = grads
        .as_mut_slice()
        .split_at_mut(params.spec(TensorId::ConvB).offset);
    let dcw = &mut dcw[params.spec(TensorId::ConvW).offset..];
    let (dcb, rest) = rest.split_at_mut(e);
    let dpos = &mut rest[..e * s];
    embed_backward(&c.input, &dembed, cfg.kernel, e, dcw, dcb, dpos);
}

/// Backward of the patch convolution plus positional embedding, given the
/// embedding gradient (token-major). Accumulates into the kernel `[k, E]`,
/// bias `[E]` and position `[E, S]` gradients.
pub fn embed_backward(
    input: &[f64],
    dembed: &[f64],
    k: usize,
    e: usize,
    dcw: &mut [f64],
    dcb: &mut [f64],
    dpos: &mut [f64],
) {
    let s = dembed.len() / e;
    for tk in 0..s {
        for ch in 0..e {
            let d = dembed[tk * e + ch];
            dpos[ch * s + tk] += d;
            dcb[ch] += d;
            for j in 0..k {
                dcw[j * e + ch] += input[tk * k + j] * d;
            }
        }
    }
}

/// Mean cross-entropy over `batch` and its gradient. Examples are processed
/// in fixed-size chunks (in parallel when a thread pool is available) and the
/// chunk results are summed in order. `make_hook` builds one activation hook
/// per chunk; the hooks are returned in chunk order.
pub fn loss_and_grad_hooked<H, F>(
    params: &ModelParams,
    batch: &[&Example],
    make_hook: F,
) -> Result<(f64, GradientSet, Vec<H>)>
where
    H: ActHook + Send,
    F: Fn() -> H + Sync,
{
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = batch.len() as f64;
    let parts: Vec<Result<(f64, GradientSet, H)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut hook = make_hook();
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            for ex in chunk {
                let cache = forward_cached(params, &ex.window, &ex.rr, &mut hook)?;
                let (l, mut dl) = softmax_cross_entropy(&cache.logits, ex.label);
                dl.iter_mut().for_each(|v| *v /= n);
                loss += l;
                backward(params, &cache, &dl, &mut grads);
            }
            Ok((loss, grads, hook))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    let mut hooks = Vec::with_capacity(parts.len());
    for part in parts {
        let (l, g, h) = part?;
        total += l;
        grads.add_assign(&g);
        hooks.push(h);
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, step: 0 });
    }
    Ok((loss, grads, hooks))
}

pub fn loss_and_grad(params: &ModelParams, batch: &[&Example]) -> Result<(f64, GradientSet)> {
    let (loss, grads, _) = loss_and_grad_hooked(params, batch, || crate::model::NoHook)?;
    Ok((loss, grads))
}

/// Mean loss without gradients.
pub fn loss_only(params: &ModelParams, examples: &[&Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let parts: Vec<Result<f64>> = examples
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk.iter().try_fold(0.0, |acc, ex| {
                let logits = crate::model::forward(params, &ex.window, &ex.rr)?;
                Ok(acc + softmax_cross_entropy(&logits, ex.label).0)
            })
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / examples.len() as f64)
}
