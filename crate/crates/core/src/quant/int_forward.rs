//! The integer-only forward pass. Integer types only, like `int_ops.rs`.

use serde::{Deserialize, Serialize};

use super::int_ops::{
    i_layernorm, i_softmax, linear_acc, saturate_i32, AddRequant, ExpConsts, IntGelu,
    IntLayerNorm, IntLinear, Requant,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntDims {
    pub input_len: usize,
    pub embed_dim: usize,
    pub kernel: usize,
    pub heads: usize,
    pub hidden: usize,
    pub classes: usize,
    pub seq_len: usize,
    /// Raw RR inputs; zero when the head takes no RR features.
    pub rr_dim: usize,
    pub rr_features: usize,
}

/// Every integer parameter of the pipeline. Activations between stages are
/// int8; the logits stay int32.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntModel {
    pub dims: IntDims,
    /// `[kernel][E]`.
    pub conv_w: Vec<i8>,
    /// Convolution bias plus positional embedding, `[S][E]`, at the
    /// input scale times the convolution weight scale.
    pub embed_bias: Vec<i32>,
    pub embed_out: Requant,
    pub ln1: IntLayerNorm,
    pub q: IntLinear,
    pub k: IntLinear,
    pub v: IntLinear,
    pub softmax: ExpConsts,
    /// From `SOFTMAX_ONE`-weighted sums of V to the context scale.
    pub ctx_out: Requant,
    pub attn_out: IntLinear,
    pub res1: AddRequant,
    pub ln2: IntLayerNorm,
    pub ff1: IntLinear,
    pub gelu1: IntGelu,
    pub ff2: IntLinear,
    pub gelu2: IntGelu,
    pub res2: AddRequant,
    pub ln3: IntLayerNorm,
    /// From the token sum of LN3 to the concat scale (the 1/S is folded in).
    pub pool_out: Requant,
    /// RR projection, `[rr_features][rr_features]`, without bias.
    pub rr_w: Vec<i8>,
    pub rr_out: Requant,
    /// `[E + rr_features][classes]`.
    pub head_w: Vec<i8>,
    pub head_b: Vec<i32>,
}

impl IntModel {
    pub fn check(&self) -> Result<()> {
        let d = &self.dims;
        let (e, s) = (d.embed_dim, d.seq_len);
        let lin = |l: &IntLinear, n_in: usize, n_out: usize| {
            l.n_in == n_in && l.n_out == n_out && l.w.len() == n_in * n_out && l.b.len() == n_out
        };
        let ln = |l: &IntLayerNorm| l.gamma.len() == e && l.beta.len() == e;
        let ok = d.heads > 0
            && e % d.heads == 0
            && d.kernel > 0
            && s * d.kernel <= d.input_len
            && self.conv_w.len() == d.kernel * e
            && self.embed_bias.len() == s * e
            && ln(&self.ln1)
            && ln(&self.ln2)
            && ln(&self.ln3)
            && lin(&self.q, e, e)
            && lin(&self.k, e, e)
            && lin(&self.v, e, e)
            && lin(&self.attn_out, e, e)
            && lin(&self.ff1, e, d.hidden)
            && lin(&self.ff2, d.hidden, e)
            && self.rr_w.len() == d.rr_features * d.rr_features
            && (d.rr_features == 0 || d.rr_features == d.rr_dim)
            && self.head_w.len() == (e + d.rr_features) * d.classes
            && self.head_b.len() == d.classes;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("inconsistent integer model".into()))
        }
    }
}

/// Integer attention over token-major int8 Q, K, V. Each probability row is
/// handed to `on_probs` before use.
pub fn int_attention(
    q: &[i8],
    k: &[i8],
    v: &[i8],
    seq: usize,
    width: usize,
    heads: usize,
    softmax: &ExpConsts,
    out: Requant,
    on_probs: &mut dyn FnMut(&[i32]),
) -> Vec<i8> {
    let p = width / heads;
    let mut ctx = vec![0i8; seq * width];
    let mut scores = vec![0i32; seq];
    for h in 0..heads {
        let off = h * p;
        for i in 0..seq {
            let qi = &q[i * width + off..i * width + off + p];
            for (j, sc) in scores.iter_mut().enumerate() {
                let kj = &k[j * width + off..j * width + off + p];
                let dot: i64 = qi.iter().zip(kj).map(|(&a, &b)| a as i64 * b as i64).sum();
                *sc = saturate_i32(dot as i128);
            }
            let probs = i_softmax(&scores, softmax);
            on_probs(&probs);
            for c in 0..p {
                let acc: i64 = probs
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| w as i64 * v[j * width + off + c] as i64)
                    .sum();
                ctx[i * width + off + c] = out.to_i8(acc);
            }
        }
    }
    ctx
}

/// Integer logits for one beat; `window` and `rr` must already be
/// quantized at the model's input scales.
pub fn int_forward(window: &[i8], rr: &[i8], m: &IntModel) -> Result<Vec<i32>> {
    int_forward_observed(window, rr, m, &mut |_| {})
}

/// As [`int_forward`], showing every attention probability row to `on_probs`.
pub fn int_forward_observed(
    window: &[i8],
    rr: &[i8],
    m: &IntModel,
    on_probs: &mut dyn FnMut(&[i32]),
) -> Result<Vec<i32>> {
    let d = &m.dims;
    if window.len() != d.input_len {
        return Err(Error::Shape(format!(
            "window of {} samples, expected {}",
            window.len(),
            d.input_len
        )));
    }
    if rr.len() != d.rr_dim {
        return Err(Error::Shape(format!(
            "{} RR values, expected {}",
            rr.len(),
            d.rr_dim
        )));
    }
    let (e, s, kk) = (d.embed_dim, d.seq_len, d.kernel);

    let mut embed = Vec::with_capacity(s * e);
    for t in 0..s {
        let taps = &window[t * kk..(t + 1) * kk];
        let bias = &m.embed_bias[t * e..(t + 1) * e];
        let acc = linear_acc(taps, kk, &m.conv_w, bias, e);
        embed.extend(acc.into_iter().map(|a| m.embed_out.to_i8(a as i64)));
    }

    let ln1 = i_layernorm(&embed, &m.ln1);
    let q = m.q.forward(&ln1);
    let k = m.k.forward(&ln1);
    let v = m.v.forward(&ln1);
    let ctx = int_attention(&q, &k, &v, s, e, d.heads, &m.softmax, m.ctx_out, on_probs);
    let attn = m.attn_out.forward(&ctx);
    let res1: Vec<i8> = embed.iter().zip(&attn).map(|(&a, &b)| m.res1.apply(a, b)).collect();

    let ln2 = i_layernorm(&res1, &m.ln2);
    let g1 = m.gelu1.forward(&m.ff1.forward(&ln2));
    let g2 = m.gelu2.forward(&m.ff2.forward(&g1));
    let res2: Vec<i8> = res1.iter().zip(&g2).map(|(&a, &b)| m.res2.apply(a, b)).collect();

    let ln3 = i_layernorm(&res2, &m.ln3);
    let mut concat = Vec::with_capacity(e + d.rr_features);
    for c in 0..e {
        let sum: i64 = (0..s).map(|t| ln3[t * e + c] as i64).sum();
        concat.push(m.pool_out.to_i8(sum));
    }
    if d.rr_features > 0 {
        let zero = vec![0i32; d.rr_features];
        let acc = linear_acc(rr, d.rr_features, &m.rr_w, &zero, d.rr_features);
        concat.extend(acc.into_iter().map(|a| m.rr_out.to_i8(a as i64)));
    }
    Ok(linear_acc(&concat, e + d.rr_features, &m.head_w, &m.head_b, d.classes))
}
