use super::layers::{
    add_positions, attention_core, conv_tokens, gelu, layer_norm_rows, linear, LnCache,
};
use super::{ModelParams, TensorId};
use crate::{Error, Result};

/// Tensor boundaries where an observer may read or rewrite activations.
/// Calibration records ranges here; quantization-aware training rounds
/// values onto the integer grid the integer pipeline will use.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum HookPoint {
    Input,
    RrInput,
    Embed,
    Ln1,
    Q,
    K,
    V,
    /// Attention probabilities, `[head][query][key]`.
    Probs,
    Ctx,
    AttnOut,
    Res1,
    Ln2,
    Ff1,
    Gelu1,
    Ff2,
    Gelu2,
    Res2,
    Ln3,
    /// Pooled encoder output followed by the RR embedding.
    Concat,
}

impl HookPoint {
    pub const ALL: [HookPoint; 19] = [
        HookPoint::Input,
        HookPoint::RrInput,
        HookPoint::Embed,
        HookPoint::Ln1,
        HookPoint::Q,
        HookPoint::K,
        HookPoint::V,
        HookPoint::Probs,
        HookPoint::Ctx,
        HookPoint::AttnOut,
        HookPoint::Res1,
        HookPoint::Ln2,
        HookPoint::Ff1,
        HookPoint::Gelu1,
        HookPoint::Ff2,
        HookPoint::Gelu2,
        HookPoint::Res2,
        HookPoint::Ln3,
        HookPoint::Concat,
    ];
}

pub trait ActHook {
    fn apply(&mut self, point: HookPoint, data: &mut [f64]);
}

pub struct NoHook;

impl ActHook for NoHook {
    fn apply(&mut self, _: HookPoint, _: &mut [f64]) {}
}

/// Every intermediate of one forward pass, as consumed by the backward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cache {
    pub input: Vec<f64>,
    pub rr: Vec<f64>,
    pub embed: Vec<f64>,
    pub ln1: Vec<f64>,
    pub ln1_cache: LnCache,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    pub probs: Vec<f64>,
    pub ctx: Vec<f64>,
    pub attn_out: Vec<f64>,
    pub res1: Vec<f64>,
    pub ln2: Vec<f64>,
    pub ln2_cache: LnCache,
    pub ff1: Vec<f64>,
    pub gelu1: Vec<f64>,
    pub ff2: Vec<f64>,
    pub gelu2: Vec<f64>,
    pub res2: Vec<f64>,
    pub ln3: Vec<f64>,
    pub ln3_cache: LnCache,
    /// Pooled encoder output and RR embedding, concatenated.
    pub concat: Vec<f64>,
    pub logits: Vec<f64>,
}

fn check_inputs(params: &ModelParams, window: &[f64], rr: &[f64]) -> Result<()> {
    let c = params.config();
    if window.len() != c.input_len {
        return Err(Error::Shape(format!(
            "window of {} samples, expected {}",
            window.len(),
            c.input_len
        )));
    }
    if rr.len() != c.rr_dim {
        return Err(Error::Shape(format!(
            "{} RR values, expected {}",
            rr.len(),
            c.rr_dim
        )));
    }
    Ok(())
}

/// Forward pass keeping every intermediate. `hook` sees each tensor right
/// after it is produced and may modify it in place.
pub fn forward_cached(
    params: &ModelParams,
    window: &[f64],
    rr: &[f64],
    hook: &mut dyn ActHook,
) -> Result<Cache> {
    check_inputs(params, window, rr)?;
    let cfg = params.config();
    let (e, hid) = (cfg.embed_dim, cfg.hidden);
    let s = cfg.seq_len();
    let t = |id| params.tensor(id);
    let mut c = Cache {
        input: window.to_vec(),
        rr: rr.to_vec(),
        ..Cache::default()
    };
    hook.apply(HookPoint::Input, &mut c.input);
    hook.apply(HookPoint::RrInput, &mut c.rr);

    c.embed = conv_tokens(&c.input, params);
    add_positions(&mut c.embed, params);
    hook.apply(HookPoint::Embed, &mut c.embed);

    (c.ln1, c.ln1_cache) = layer_norm_rows(&c.embed, e, t(TensorId::Ln1G), t(TensorId::Ln1B));
    hook.apply(HookPoint::Ln1, &mut c.ln1);
    c.q = linear(&c.ln1, e, t(TensorId::Wq), t(TensorId::Bq), e);
    hook.apply(HookPoint::Q, &mut c.q);
    c.k = linear(&c.ln1, e, t(TensorId::Wk), t(TensorId::Bk), e);
    hook.apply(HookPoint::K, &mut c.k);
    c.v = linear(&c.ln1, e, t(TensorId::Wv), t(TensorId::Bv), e);
    hook.apply(HookPoint::V, &mut c.v);
    (c.ctx, c.probs) = attention_core(&c.q, &c.k, &c.v, s, e, cfg.heads, |p| {
        hook.apply(HookPoint::Probs, p)
    });
    hook.apply(HookPoint::Ctx, &mut c.ctx);
    c.attn_out = linear(&c.ctx, e, t(TensorId::Wo), t(TensorId::Bo), e);
    hook.apply(HookPoint::AttnOut, &mut c.attn_out);
    c.res1 = c
        .embed
        .iter()
        .zip(&c.attn_out)
        .map(|(a, b)| a + b)
        .collect();
    hook.apply(HookPoint::Res1, &mut c.res1);

    (c.ln2, c.ln2_cache) = layer_norm_rows(&c.res1, e, t(TensorId::Ln2G), t(TensorId::Ln2B));
    hook.apply(HookPoint::Ln2, &mut c.ln2);
    c.ff1 = linear(&c.ln2, e, t(TensorId::Ff1W), t(TensorId::Ff1B), hid);
    hook.apply(HookPoint::Ff1, &mut c.ff1);
    c.gelu1 = c.ff1.iter().map(|&v| gelu(v)).collect();
    hook.apply(HookPoint::Gelu1, &mut c.gelu1);
    c.ff2 = linear(&c.gelu1, hid, t(TensorId::Ff2W), t(TensorId::Ff2B), e);
    hook.apply(HookPoint::Ff2, &mut c.ff2);
    c.gelu2 = c.ff2.iter().map(|&v| gelu(v)).collect();
    hook.apply(HookPoint::Gelu2, &mut c.gelu2);
    c.res2 = c.res1.iter().zip(&c.gelu2).map(|(a, b)| a + b).collect();
    hook.apply(HookPoint::Res2, &mut c.res2);

    (c.ln3, c.ln3_cache) = layer_norm_rows(&c.res2, e, t(TensorId::Ln3G), t(TensorId::Ln3B));
    hook.apply(HookPoint::Ln3, &mut c.ln3);
    let rr_n = cfg.rr_features();
    c.concat = vec![0.0; e + rr_n];
    for tok in c.ln3.chunks_exact(e) {
        for (p, v) in c.concat.iter_mut().zip(tok) {
            *p += v;
        }
    }
    c.concat[..e].iter_mut().for_each(|p| *p /= s as f64);
    if rr_n > 0 {
        let rr_emb = linear(&c.rr, rr_n, t(TensorId::RrW), &vec![0.0; rr_n], rr_n);
        c.concat[e..].copy_from_slice(&rr_emb);
    }
    hook.apply(HookPoint::Concat, &mut c.concat);
    c.logits = linear(
        &c.concat,
        e + rr_n,
        t(TensorId::HeadW),
        t(TensorId::HeadB),
        cfg.classes,
    );
    Ok(c)
}

/// Class logits for one beat.
pub fn forward(params: &ModelParams, window: &[f64], rr: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_cached(params, window, rr, &mut NoHook)?.logits)
}

/// Index of the largest logit (first one on ties).
pub fn predict(logits: &[f64]) -> usize {
    logits
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
        .0
}
