use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::{ModelParams, TensorId};
use crate::{Error, Result};

pub const LN_EPS: f64 = 1e-5;

/// A `(channels, sequence)` tensor. Storage is token-major: the channels of
/// one sequence position are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    channels: usize,
    seq: usize,
    data: Vec<f64>,
}

impl Activation {
    pub fn from_token_major(channels: usize, seq: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * seq {
            return Err(Error::Shape(format!(
                "{} values for {channels}x{seq}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            seq,
            data,
        })
    }

    /// `(channels, sequence)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.seq)
    }

    pub fn get(&self, channel: usize, t: usize) -> f64 {
        self.data[t * self.channels + channel]
    }

    pub fn token(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn as_token_major(&self) -> &[f64] {
        &self.data
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// d/dx of x * Phi(x) = Phi(x) + x * phi(x).
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

/// `y[t, :] = b + x[t, :] W` for `W` stored `[n_in, n_out]`.
pub fn linear(x: &[f64], n_in: usize, w: &[f64], b: &[f64], n_out: usize) -> Vec<f64> {
    let rows = x.len() / n_in;
    let mut y = Vec::with_capacity(rows * n_out);
    for r in 0..rows {
        y.extend_from_slice(b);
        let out = &mut y[r * n_out..];
        for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
            for (o, &wio) in out.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                *o += xi * wio;
            }
        }
    }
    y
}

/// Per-row normalization statistics kept for the backward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LnCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub fn layer_norm_rows(x: &[f64], width: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, LnCache) {
    let rows = x.len() / width;
    let mut y = vec![0.0; x.len()];
    let mut cache = LnCache {
        xhat: vec![0.0; x.len()],
        rstd: vec![0.0; rows],
    };
    for r in 0..rows {
        let row = &x[r * width..(r + 1) * width];
        let mean = row.iter().sum::<f64>() / width as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
        let rstd = 1.0 / (var + LN_EPS).sqrt();
        cache.rstd[r] = rstd;
        for e in 0..width {
            let xh = (row[e] - mean) * rstd;
            cache.xhat[r * width + e] = xh;
            y[r * width + e] = xh * g[e] + b[e];
        }
    }
    (y, cache)
}

/// Non-overlapping convolution of the window into S tokens of width E, plus
/// the bias. Positional embeddings are added by the caller.
pub fn conv_tokens(window: &[f64], params: &ModelParams) -> Vec<f64> {
    let c = params.config();
    let (k, e, s) = (c.kernel, c.embed_dim, c.seq_len());
    let w = params.tensor(TensorId::ConvW);
    let b = params.tensor(TensorId::ConvB);
    let mut out = Vec::with_capacity(s * e);
    for t in 0..s {
        out.extend_from_slice(b);
        let tok = &mut out[t * e..];
        for j in 0..k {
            let xj = window[t * k + j];
            for (o, &wje) in tok.iter_mut().zip(&w[j * e..(j + 1) * e]) {
                *o += xj * wje;
            }
        }
    }
    out
}

pub fn add_positions(tokens: &mut [f64], params: &ModelParams) {
    let c = params.config();
    let (e, s) = (c.embed_dim, c.seq_len());
    let pos = params.tensor(TensorId::PosEmbed);
    for t in 0..s {
        for ch in 0..e {
            tokens[t * e + ch] += pos[ch * s + t];
        }
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Multi-head attention core on token-major Q, K, V: returns the
/// concatenated per-head contexts (before the output projection) and the
/// attention probabilities laid out `[head][query][key]`.
pub fn attention_core(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    seq: usize,
    width: usize,
    heads: usize,
    mut probs_hook: impl FnMut(&mut [f64]),
) -> (Vec<f64>, Vec<f64>) {
    let p = width / heads;
    let scale = 1.0 / (p as f64).sqrt();
    let mut probs = vec![0.0; heads * seq * seq];
    for h in 0..heads {
        for t in 0..seq {
            let row = &mut probs[(h * seq + t) * seq..(h * seq + t + 1) * seq];
            let qt = &q[t * width + h * p..t * width + (h + 1) * p];
            for (u, r) in row.iter_mut().enumerate() {
                let ku = &k[u * width + h * p..u * width + (h + 1) * p];
                *r = qt.iter().zip(ku).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            softmax_in_place(row);
        }
    }
    probs_hook(&mut probs);
    let mut ctx = vec![0.0; seq * width];
    for h in 0..heads {
        for t in 0..seq {
            let row = &probs[(h * seq + t) * seq..(h * seq + t + 1) * seq];
            let out = &mut ctx[t * width + h * p..t * width + (h + 1) * p];
            for (u, &a) in row.iter().enumerate() {
                for (o, &vu) in out
                    .iter_mut()
                    .zip(&v[u * width + h * p..u * width + (h + 1) * p])
                {
                    *o += a * vu;
                }
            }
        }
    }
    (ctx, probs)
}

/// Convolutional embedding with positions added, shape `(E, S)`.
pub fn conv_embed(window: &[f64], params: &ModelParams) -> Result<Activation> {
    let c = params.config();
    if window.len() != c.input_len {
        return Err(Error::Shape(format!(
            "window of {} samples, expected {}",
            window.len(),
            c.input_len
        )));
    }
    let mut tokens = conv_tokens(window, params);
    add_positions(&mut tokens, params);
    Activation::from_token_major(c.embed_dim, c.seq_len(), tokens)
}

/// Multi-head self-attention including the output projection; the residual
/// is left to the caller.
pub fn attention(x: &Activation, params: &ModelParams) -> Result<Activation> {
    let c = params.config();
    let (e, s) = x.shape();
    if e != c.embed_dim {
        return Err(Error::Shape(format!(
            "{e} channels, expected {}",
            c.embed_dim
        )));
    }
    let xs = x.as_token_major();
    let q = linear(
        xs,
        e,
        params.tensor(TensorId::Wq),
        params.tensor(TensorId::Bq),
        e,
    );
    let k = linear(
        xs,
        e,
        params.tensor(TensorId::Wk),
        params.tensor(TensorId::Bk),
        e,
    );
    let v = linear(
        xs,
        e,
        params.tensor(TensorId::Wv),
        params.tensor(TensorId::Bv),
        e,
    );
    let (ctx, _) = attention_core(&q, &k, &v, s, e, c.heads, |_| {});
    let out = linear(
        &ctx,
        e,
        params.tensor(TensorId::Wo),
        params.tensor(TensorId::Bo),
        e,
    );
    Activation::from_token_major(e, s, out)
}

/// Normalizes each sequence position across the channel axis.
pub fn layer_norm(x: &Activation, gamma: &[f64], beta: &[f64]) -> Result<Activation> {
    let (e, s) = x.shape();
    if gamma.len() != e || beta.len() != e {
        return Err(Error::Shape(format!(
            "gain/bias of {}/{} for {e} channels",
            gamma.len(),
            beta.len()
        )));
    }
    let (y, _) = layer_norm_rows(x.as_token_major(), e, gamma, beta);
    Activation::from_token_major(e, s, y)
}
