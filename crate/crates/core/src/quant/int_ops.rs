//! Integer kernels of the 8-bit pipeline. This file and `int_forward.rs`
//! use integer types only; a test scans both sources to keep it that way.

use serde::{Deserialize, Serialize};

/// Fixed-point one of the attention weights.
pub const SOFTMAX_ONE: i64 = 1 << 15;

/// Fraction bits of the normalized value inside the integer LayerNorm.
pub const LN_FRAC_BITS: u32 = 12;

/// Extra bits of precision on the integer standard deviation.
const LN_STD_BITS: u32 = 8;

/// Rescaling by `multiplier * 2^-shift`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requant {
    pub multiplier: i32,
    pub shift: u32,
}

/// `v * 2^-shift`, rounded half away from zero.
pub fn round_shift(v: i128, shift: u32) -> i128 {
    if shift == 0 {
        return v;
    }
    if shift >= 127 {
        return 0;
    }
    let mag = (v.unsigned_abs() + (1u128 << (shift - 1))) >> shift;
    let mag = mag as i128;
    if v < 0 {
        -mag
    } else {
        mag
    }
}

/// `num / den` rounded half away from zero; `den` must be positive.
pub fn round_div(num: i64, den: i64) -> i64 {
    let q = (num.unsigned_abs() + den.unsigned_abs() / 2) / den.unsigned_abs();
    let q = q as i64;
    if num < 0 {
        -q
    } else {
        q
    }
}

pub fn saturate_i8(v: i128) -> i8 {
    v.clamp(i8::MIN as i128, i8::MAX as i128) as i8
}

pub fn saturate_i32(v: i128) -> i32 {
    v.clamp(i32::MIN as i128, i32::MAX as i128) as i32
}

impl Requant {
    pub fn apply(self, acc: i64) -> i128 {
        round_shift(acc as i128 * self.multiplier as i128, self.shift)
    }

    pub fn to_i8(self, acc: i64) -> i8 {
        saturate_i8(self.apply(acc))
    }
}

/// `a * ma + b * mb`, shifted and saturated: the sum of two tensors held at
/// different scales, produced at a third.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddRequant {
    pub multiplier_a: i32,
    pub multiplier_b: i32,
    pub shift: u32,
}

impl AddRequant {
    pub fn apply(self, a: i8, b: i8) -> i8 {
        let acc = a as i128 * self.multiplier_a as i128 + b as i128 * self.multiplier_b as i128;
        saturate_i8(round_shift(acc, self.shift))
    }
}

/// Floor square root by Newton iteration from `2^ceil(bits/2)`.
pub fn i_sqrt(n: u32) -> u32 {
    i_sqrt_u64(n as u64) as u32
}

pub fn i_sqrt_u64(n: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    let bits = 64 - n.leading_zeros();
    let mut x: u64 = 1 << bits.div_ceil(2);
    loop {
        let y = (x + n / x) / 2;
        if y >= x {
            return x;
        }
        x = y;
    }
}

/// Dense layer with int8 weights `[n_in][n_out]` and int32 bias.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntLinear {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<i8>,
    pub b: Vec<i32>,
    pub out: Requant,
}

/// Row-wise `x W + b` with 32-bit accumulators.
pub fn linear_acc(x: &[i8], n_in: usize, w: &[i8], b: &[i32], n_out: usize) -> Vec<i32> {
    let rows = x.len() / n_in;
    let mut y = Vec::with_capacity(rows * n_out);
    let mut acc = vec![0i64; n_out];
    for r in 0..rows {
        for (a, &bo) in acc.iter_mut().zip(b) {
            *a = bo as i64;
        }
        for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
            for (a, &wio) in acc.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                *a += xi as i64 * wio as i64;
            }
        }
        y.extend(acc.iter().map(|&a| saturate_i32(a as i128)));
    }
    y
}

impl IntLinear {
    pub fn acc(&self, x: &[i8]) -> Vec<i32> {
        linear_acc(x, self.n_in, &self.w, &self.b, self.n_out)
    }

    pub fn forward(&self, x: &[i8]) -> Vec<i8> {
        self.acc(x)
            .into_iter()
            .map(|a| self.out.to_i8(a as i64))
            .collect()
    }
}

/// LayerNorm over rows of int8 inputs. `gamma` is int8; `beta` is int32 at
/// the scale of `gamma` times `2^-LN_FRAC_BITS`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntLayerNorm {
    pub gamma: Vec<i8>,
    pub beta: Vec<i32>,
    pub out: Requant,
}

/// Integer LayerNorm: exact centered sums, integer variance, `i_sqrt` for
/// the deviation, then the affine part and requantization. The input scale
/// cancels. A constant row yields the requantized `beta`.
pub fn i_layernorm(x: &[i8], ln: &IntLayerNorm) -> Vec<i8> {
    let width = ln.gamma.len();
    let e = width as i64;
    let mut y = Vec::with_capacity(x.len());
    let mut d = vec![0i64; width];
    for row in x.chunks_exact(width) {
        let sum: i64 = row.iter().map(|&v| v as i64).sum();
        // d = E * (x - mean), exactly.
        for (di, &v) in d.iter_mut().zip(row) {
            *di = e * v as i64 - sum;
        }
        let ss: u64 = d.iter().map(|&v| (v * v) as u64).sum();
        if ss == 0 {
            y.extend(ln.beta.iter().map(|&b| ln.out.to_i8(b as i64)));
            continue;
        }
        // i_sqrt(ss * 2^(2k) / E) = E * std * 2^k.
        let var = (ss << (2 * LN_STD_BITS)) + (width as u64) / 2;
        let std = i_sqrt_u64(var / width as u64).max(1) as i64;
        for ((&di, &g), &b) in d.iter().zip(&ln.gamma).zip(&ln.beta) {
            let xhat = round_div(di << (LN_FRAC_BITS + LN_STD_BITS), std);
            y.push(ln.out.to_i8(xhat * g as i64 + b as i64));
        }
    }
    y
}

/// Constants of the second-order exponential on scores at scale `S`:
/// `q_ln2 = floor(ln 2 / S)`, `q_b = floor(b / S)`, `q_c = floor(c / (a S^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpConsts {
    pub q_ln2: i32,
    pub q_b: i32,
    pub q_c: i32,
}

/// Integer `exp(q S)` for `q <= 0`, at scale `a S^2`: split
/// `q S = p - z ln 2`, approximate `exp(p)` by `(p + b)^2 + c`, shift by `z`.
pub fn i_exp(q: i64, c: &ExpConsts) -> i64 {
    let q_ln2 = (c.q_ln2 as i64).max(1);
    let z = (-q) / q_ln2;
    let p = q + z * q_ln2;
    let l = (p + c.q_b as i64).pow(2) + c.q_c as i64;
    if z >= 62 {
        0
    } else {
        l >> z
    }
}

/// Softmax of one score row as weights summing to exactly `SOFTMAX_ONE`.
/// The floor of each share is taken first; the leftover units go to the
/// largest remainders, lower index first on ties.
pub fn i_softmax(row: &[i32], c: &ExpConsts) -> Vec<i32> {
    let Some(&max) = row.iter().max() else {
        return Vec::new();
    };
    let e: Vec<i64> = row.iter().map(|&v| i_exp(v as i64 - max as i64, c)).collect();
    let total: i64 = e.iter().sum();
    if total <= 0 {
        let n = row.len() as i64;
        return (0..n)
            .map(|i| (SOFTMAX_ONE / n + i64::from(i < SOFTMAX_ONE % n)) as i32)
            .collect();
    }
    let mut out: Vec<i32> = Vec::with_capacity(row.len());
    let mut rem: Vec<(i64, usize)> = Vec::with_capacity(row.len());
    let mut assigned = 0;
    for (i, &ei) in e.iter().enumerate() {
        let num = ei as i128 * SOFTMAX_ONE as i128;
        let share = (num / total as i128) as i64;
        rem.push(((num % total as i128) as i64, i));
        assigned += share;
        out.push(share as i32);
    }
    let leftover = (SOFTMAX_ONE - assigned) as usize;
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rem.iter().take(leftover) {
        out[i] += 1;
    }
    out
}

/// Constants of the integer GELU on int8 inputs at scale `S`, with the
/// clipped second-order erf `sgn(x) (1 - |a| (min(|x|, -b) + b)^2)`
/// evaluated at `x / sqrt 2`. The polynomial runs on the input shifted left
/// by `frac_bits` (scale `T = S 2^-frac_bits`): `q_b = floor(b sqrt 2 / T)`,
/// `q_one = floor(2 / (|a| T^2))`. Output scale before `out` is
/// `S |a| T^2 / 4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntGelu {
    pub frac_bits: u32,
    pub q_b: i32,
    pub q_one: i32,
    pub out: Requant,
}

/// Integer erf of `q` at the scale implied by `g`; the result is at scale
/// `|a| T^2 / 2`, where `q_one` stands for one.
pub fn i_erf(q: i64, g: &IntGelu) -> i64 {
    let clip = -(g.q_b as i64);
    let m = (q.abs() << g.frac_bits).min(clip);
    let l = g.q_one as i64 - (m + g.q_b as i64).pow(2);
    q.signum() * l
}

/// `x (erf(x / sqrt 2) + 1) / 2` before requantization.
pub fn i_gelu(q: i64, g: &IntGelu) -> i64 {
    q * (i_erf(q, g) + g.q_one as i64)
}

impl IntGelu {
    pub fn forward(&self, x: &[i8]) -> Vec<i8> {
        x.iter()
            .map(|&v| self.out.to_i8(i_gelu(v as i64, self)))
            .collect()
    }
}
