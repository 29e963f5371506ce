use serde::{Deserialize, Serialize};

use super::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    pub params: usize,
    pub macs: usize,
    /// Millions of operations, counting a multiply-accumulate as two.
    pub mops: f64,
    pub footprint_bytes: usize,
}

/// Closed-form learnable scalar count.
pub fn count_params(c: &ModelConfig) -> usize {
    let (e, k, s, h) = (c.embed_dim, c.kernel, c.seq_len(), c.hidden);
    let rr = c.rr_features();
    let conv = k * e + e;
    let pos = e * s;
    let rr_proj = rr * rr;
    let norms = 3 * 2 * e;
    let attn = 4 * (e * e + e);
    let ffn = (e * h + h) + (h * e + e);
    let head = (e + rr) * c.classes + c.classes;
    conv + pos + rr_proj + norms + attn + ffn + head
}

/// Multiply-accumulates of one inference: convolution, Q/K/V/O projections,
/// attention scores and context, feed-forward, RR projection and head.
pub fn count_macs(c: &ModelConfig) -> usize {
    let (e, k, s, h, heads) = (c.embed_dim, c.kernel, c.seq_len(), c.hidden, c.heads);
    let p = c.head_dim();
    let rr = c.rr_features();
    let conv = s * e * k;
    let proj = 4 * s * e * e;
    let attn = 2 * heads * s * s * p;
    let ffn = 2 * s * e * h;
    conv + proj + attn + ffn + rr * rr + (e + rr) * c.classes
}

/// Bytes needed for 8-bit inference: every parameter as one byte plus the
/// largest set of int8 activations alive at the same time. The peak is in
/// attention, where the residual stream, Q, K, V and one head-by-sequence
/// score matrix per head coexist.
pub fn footprint_bytes(c: &ModelConfig) -> usize {
    let (e, s, h) = (c.embed_dim, c.seq_len(), c.hidden);
    let tokens = e * s;
    let embed = c.input_len + tokens;
    let attention = tokens + 3 * tokens + c.heads * s * s;
    let ffn = tokens + s * h;
    let head = tokens + c.head_in() + c.classes;
    count_params(c) + embed.max(attention).max(ffn).max(head)
}

pub fn count_ops_and_memory(c: &ModelConfig) -> Complexity {
    let macs = count_macs(c);
    Complexity {
        params: count_params(c),
        macs,
        mops: 2.0 * macs as f64 / 1e6,
        footprint_bytes: footprint_bytes(c),
    }
}
