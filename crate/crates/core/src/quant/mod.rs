//! 8-bit integer-only inference: per-tensor symmetric quantization,
//! multiplier/shift requantization, integer softmax, GELU and LayerNorm, and
//! quantization-aware fine-tuning with fake quantization and a
//! straight-through estimator.

mod checkpoint;
mod int_forward;
mod int_ops;

pub use checkpoint::{load_quantized, save_quantized};
pub use int_forward::{int_attention, int_forward, int_forward_observed, IntDims, IntModel};
pub use int_ops::{
    i_erf, i_exp, i_gelu, i_layernorm, i_softmax, i_sqrt, i_sqrt_u64, linear_acc, round_div,
    round_shift, saturate_i8, AddRequant, ExpConsts, IntGelu, IntLayerNorm, IntLinear, Requant,
    LN_FRAC_BITS, SOFTMAX_ONE,
};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::BeatSample;
use crate::eval::Classifier;
use crate::model::{
    forward_cached, predict, ActHook, HookPoint, ModelConfig, ModelParams, TensorId,
};
use crate::training::{
    fit, loss_and_grad_hooked, softmax_cross_entropy, EpochLog, Example, FitOptions,
    GradientSet, Objective, PlateauConfig,
};
use crate::{Error, Result};

pub const QMAX: f64 = 127.0;
/// Smallest scale handed out, so that an all-zero tensor still has one.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Clipped second-order erf `sgn(x) (1 + a (min(|x|, -b) + b)^2)`.
pub const ERF_A: f64 = -0.258;
pub const ERF_B: f64 = -1.83;
/// `exp(p) ~ a (p + b)^2 + c` on `(-ln 2, 0]`.
pub const EXP_A: f64 = 0.3585;
pub const EXP_B: f64 = 1.353;
pub const EXP_C: f64 = 0.344;

pub fn symmetric_scale(max_abs: f64) -> f64 {
    (max_abs / QMAX).max(SCALE_FLOOR)
}

/// Scale of an int8 weight tensor. An all-zero tensor gets `1/127`, so
/// that biases measured against it stay representable.
pub fn weight_scale(w: &[f64]) -> f64 {
    let m = max_abs(w);
    if m == 0.0 {
        1.0 / QMAX
    } else {
        m / QMAX
    }
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `clamp(round(x / scale), -128, 127)`, halves rounded away from zero.
pub fn quantize_tensor(x: &[f64], scale: f64) -> Vec<i8> {
    x.iter()
        .map(|v| (v / scale).round().clamp(-128.0, 127.0) as i8)
        .collect()
}

pub fn dequantize(q: &[i8], scale: f64) -> Vec<f64> {
    q.iter().map(|&v| f64::from(v) * scale).collect()
}

fn to_i32(v: f64, what: &str) -> Result<i32> {
    if v.is_finite() && v >= f64::from(i32::MIN) && v <= f64::from(i32::MAX) {
        Ok(v as i32)
    } else {
        Err(Error::ScaleMismatch(format!("{what} = {v} does not fit 32 bits")))
    }
}

/// Multiplier in `[2^30, 2^31)` and the matching shift for a positive ratio.
pub fn requant_from_ratio(ratio: f64) -> Result<Requant> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(Error::ScaleMismatch(format!("scale ratio {ratio}")));
    }
    if ratio == 0.0 {
        return Ok(Requant {
            multiplier: 0,
            shift: 0,
        });
    }
    let shift = 30 - ratio.log2().floor() as i32;
    if shift < 0 {
        return Err(Error::ScaleMismatch(format!("scale ratio {ratio} too large")));
    }
    if shift > 126 {
        return Ok(Requant {
            multiplier: 0,
            shift: 0,
        });
    }
    let mut m = (ratio * 2f64.powi(shift)).round();
    let mut shift = shift as u32;
    if m >= 2f64.powi(31) {
        m /= 2.0;
        shift -= 1;
    }
    Ok(Requant {
        multiplier: m as i32,
        shift,
    })
}

/// Two ratios sharing one shift, set by the larger of them.
pub fn add_requant_from_ratios(ra: f64, rb: f64) -> Result<AddRequant> {
    let big = ra.max(rb);
    let base = requant_from_ratio(big)?;
    let m = |r: f64| to_i32((r * 2f64.powi(base.shift as i32)).round(), "residual multiplier");
    Ok(AddRequant {
        multiplier_a: m(ra)?,
        multiplier_b: m(rb)?,
        shift: base.shift,
    })
}

/// Exponential constants for scores whose real value is `q * score_scale`.
pub fn exp_consts(score_scale: f64) -> Result<ExpConsts> {
    let s = score_scale;
    let c = ExpConsts {
        q_ln2: to_i32((std::f64::consts::LN_2 / s).floor(), "softmax ln2")?,
        q_b: to_i32((EXP_B / s).floor(), "softmax b")?,
        q_c: to_i32((EXP_C / (EXP_A * s * s)).floor(), "softmax c")?,
    };
    if c.q_ln2 < 1 {
        return Err(Error::ScaleMismatch(format!("score scale {s} too coarse")));
    }
    Ok(c)
}

/// Most fraction bits given to the GELU polynomial input.
const GELU_MAX_FRAC_BITS: u32 = 8;

/// Integer GELU for int8 input at `s_in`, requantized to `s_out`. Uses as
/// many polynomial fraction bits as keep the constants within 32 bits.
pub fn gelu_consts(s_in: f64, s_out: f64) -> Result<IntGelu> {
    let a = ERF_A.abs();
    let mut frac_bits = GELU_MAX_FRAC_BITS;
    loop {
        let t = s_in / f64::from(1u32 << frac_bits);
        let q_one = (2.0 / (a * t * t)).floor();
        // The product q * 2 q_one must also stay well inside 64 bits.
        if q_one <= f64::from(i32::MAX) || frac_bits == 0 {
            return Ok(IntGelu {
                frac_bits,
                q_b: to_i32((ERF_B * std::f64::consts::SQRT_2 / t).floor(), "gelu b")?,
                q_one: to_i32(q_one, "gelu one")?,
                out: requant_from_ratio(gelu_output_scale(s_in, frac_bits) / s_out)?,
            });
        }
        frac_bits -= 1;
    }
}

/// Real value of one unit of the integer GELU output before requantization.
pub fn gelu_output_scale(s_in: f64, frac_bits: u32) -> f64 {
    let t = s_in / f64::from(1u32 << frac_bits);
    s_in * ERF_A.abs() * t * t / 4.0
}

/// Activation scales at every hook point. Attention probabilities live on
/// the fixed `2^-15` grid and are not stored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScaleTable {
    scales: BTreeMap<HookPoint, f64>,
}

impl ScaleTable {
    pub fn get(&self, p: HookPoint) -> Result<f64> {
        if p == HookPoint::Probs {
            return Ok(1.0 / SOFTMAX_ONE as f64);
        }
        self.scales
            .get(&p)
            .copied()
            .ok_or_else(|| Error::ScaleMismatch(format!("no scale for {p:?}")))
    }

    pub fn set(&mut self, p: HookPoint, scale: f64) {
        if p != HookPoint::Probs {
            self.scales.insert(p, scale.max(SCALE_FLOOR));
        }
    }

    pub fn from_ranges(ranges: &RangeObserver) -> Self {
        let mut t = ScaleTable::default();
        for p in HookPoint::ALL {
            t.set(p, symmetric_scale(ranges.max_abs(p)));
        }
        t
    }

    pub fn iter(&self) -> impl Iterator<Item = (HookPoint, f64)> + '_ {
        self.scales.iter().map(|(&p, &s)| (p, s))
    }
}

/// Largest magnitude seen at each hook point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RangeObserver {
    max: BTreeMap<HookPoint, f64>,
}

impl RangeObserver {
    pub fn max_abs(&self, p: HookPoint) -> f64 {
        self.max.get(&p).copied().unwrap_or(0.0)
    }

    pub fn merge(&mut self, other: &RangeObserver) {
        for (&p, &m) in &other.max {
            let e = self.max.entry(p).or_insert(0.0);
            *e = e.max(m);
        }
    }
}

impl ActHook for RangeObserver {
    fn apply(&mut self, point: HookPoint, data: &mut [f64]) {
        let e = self.max.entry(point).or_insert(0.0);
        *e = e.max(max_abs(data));
    }
}

/// Activation scales from the largest magnitude observed over `examples`.
/// Adding examples can only grow a scale.
pub fn calibrate(params: &ModelParams, examples: &[&Example]) -> Result<ScaleTable> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ranges = examples
        .par_iter()
        .map(|ex| {
            let mut obs = RangeObserver::default();
            forward_cached(params, &ex.window, &ex.rr, &mut obs)?;
            Ok::<_, Error>(obs)
        })
        .try_reduce(RangeObserver::default, |mut a, b| {
            a.merge(&b);
            Ok(a)
        })?;
    Ok(ScaleTable::from_ranges(&ranges))
}

/// Exponential moving average of per-batch scales.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaScales {
    pub table: ScaleTable,
    pub momentum: f64,
}

impl EmaScales {
    pub fn update(&mut self, batch: &RangeObserver) {
        for p in HookPoint::ALL {
            if p == HookPoint::Probs {
                continue;
            }
            let fresh = symmetric_scale(batch.max_abs(p));
            let next = match self.table.get(p) {
                Ok(old) => self.momentum * old + (1.0 - self.momentum) * fresh,
                Err(_) => fresh,
            };
            self.table.set(p, next);
        }
    }
}

/// Quantize-dequantize at every hook point with fixed scales, recording
/// the ranges it sees before rounding.
pub struct FakeQuant<'a> {
    scales: &'a ScaleTable,
    pub observed: RangeObserver,
}

impl<'a> FakeQuant<'a> {
    pub fn new(scales: &'a ScaleTable) -> Self {
        Self {
            scales,
            observed: RangeObserver::default(),
        }
    }
}

impl ActHook for FakeQuant<'_> {
    fn apply(&mut self, point: HookPoint, data: &mut [f64]) {
        self.observed.apply(point, data);
        if point == HookPoint::Probs {
            let one = SOFTMAX_ONE as f64;
            data.iter_mut().for_each(|v| *v = (*v * one).round() / one);
            return;
        }
        let s = self
            .scales
            .get(point)
            .expect("every non-probability point has a scale");
        data.iter_mut()
            .for_each(|v| *v = (*v / s).round().clamp(-128.0, 127.0) * s);
    }
}

/// Tensors stored as int8: dense and convolution weights and the
/// LayerNorm gains.
pub fn is_int8_tensor(id: TensorId) -> bool {
    id.is_weight_matrix() || matches!(id, TensorId::Ln1G | TensorId::Ln2G | TensorId::Ln3G)
}

/// The parameters with every int8 tensor rounded onto its grid.
pub fn fake_quant_weights(params: &ModelParams) -> ModelParams {
    let mut out = params.clone();
    for spec in params.layout() {
        if is_int8_tensor(spec.id) {
            let t = out.tensor_mut(spec.id);
            let s = weight_scale(t);
            t.iter_mut()
                .for_each(|v| *v = (*v / s).round().clamp(-128.0, 127.0) * s);
        }
    }
    out
}

/// Logits of the fake-quantized float model.
pub fn fake_quant_forward(
    params: &ModelParams,
    scales: &ScaleTable,
    window: &[f64],
    rr: &[f64],
) -> Result<Vec<f64>> {
    let wq = fake_quant_weights(params);
    Ok(forward_cached(&wq, window, rr, &mut FakeQuant::new(scales))?.logits)
}

/// Model input quantized at known scales.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedInput {
    pub window: Vec<i8>,
    pub rr: Vec<i8>,
    pub window_scale: f64,
    pub rr_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub config: ModelConfig,
    pub scales: ScaleTable,
    /// Scale of each int8 tensor, by tensor name.
    pub weight_scales: BTreeMap<String, f64>,
    /// Real value of one logit unit.
    pub logit_scale: f64,
    pub int: IntModel,
}

impl QuantizedModel {
    pub fn from_float(params: &ModelParams, scales: &ScaleTable) -> Result<Self> {
        let cfg = params.config().clone();
        let (e, s, p) = (cfg.embed_dim, cfg.seq_len(), cfg.head_dim());
        let rr_n = cfg.rr_features();
        let sc = |pt| scales.get(pt);
        let mut weight_scales = BTreeMap::new();
        let mut wq = |id: TensorId| {
            let t = params.tensor(id);
            let ws = weight_scale(t);
            weight_scales.insert(id.name().to_string(), ws);
            (quantize_tensor(t, ws), ws)
        };
        let bias = |id: TensorId, scale: f64| -> Result<Vec<i32>> {
            params
                .tensor(id)
                .iter()
                .map(|b| to_i32((b / scale).round(), id.name()))
                .collect()
        };
        let mut linear = |w: TensorId, b: TensorId, s_x: f64, s_out: f64| -> Result<IntLinear> {
            let spec = params.spec(w);
            let (wi, ws) = wq(w);
            Ok(IntLinear {
                n_in: spec.rows,
                n_out: spec.cols,
                w: wi,
                b: bias(b, s_x * ws)?,
                out: requant_from_ratio(s_x * ws / s_out)?,
            })
        };

        let s_in = sc(HookPoint::Input)?;
        let s_embed = sc(HookPoint::Embed)?;
        let cw_scale = weight_scale(params.tensor(TensorId::ConvW));
        let conv_b = params.tensor(TensorId::ConvB);
        let pos = params.tensor(TensorId::PosEmbed);
        let mut embed_bias = Vec::with_capacity(s * e);
        for t in 0..s {
            for c in 0..e {
                embed_bias.push(to_i32(
                    ((conv_b[c] + pos[c * s + t]) / (s_in * cw_scale)).round(),
                    "embedding bias",
                )?);
            }
        }
        let q = linear(TensorId::Wq, TensorId::Bq, sc(HookPoint::Ln1)?, sc(HookPoint::Q)?)?;
        let k = linear(TensorId::Wk, TensorId::Bk, sc(HookPoint::Ln1)?, sc(HookPoint::K)?)?;
        let v = linear(TensorId::Wv, TensorId::Bv, sc(HookPoint::Ln1)?, sc(HookPoint::V)?)?;
        let attn_out = linear(TensorId::Wo, TensorId::Bo, sc(HookPoint::Ctx)?, sc(HookPoint::AttnOut)?)?;
        let ff1 = linear(TensorId::Ff1W, TensorId::Ff1B, sc(HookPoint::Ln2)?, sc(HookPoint::Ff1)?)?;
        let ff2 = linear(TensorId::Ff2W, TensorId::Ff2B, sc(HookPoint::Gelu1)?, sc(HookPoint::Ff2)?)?;
        let (conv_w, _) = wq(TensorId::ConvW);
        let (rr_w, rr_ws) = wq(TensorId::RrW);
        let (head_w, head_ws) = wq(TensorId::HeadW);
        let mut layer_norm = |g: TensorId, b: TensorId, s_out: f64| -> Result<IntLayerNorm> {
            let (gamma, gs) = wq(g);
            let unit = gs / f64::from(1u32 << LN_FRAC_BITS);
            Ok(IntLayerNorm {
                gamma,
                beta: bias(b, unit)?,
                out: requant_from_ratio(unit / s_out)?,
            })
        };
        let ln1 = layer_norm(TensorId::Ln1G, TensorId::Ln1B, sc(HookPoint::Ln1)?)?;
        let ln2 = layer_norm(TensorId::Ln2G, TensorId::Ln2B, sc(HookPoint::Ln2)?)?;
        let ln3 = layer_norm(TensorId::Ln3G, TensorId::Ln3B, sc(HookPoint::Ln3)?)?;

        let s_concat = sc(HookPoint::Concat)?;
        let score_scale = sc(HookPoint::Q)? * sc(HookPoint::K)? / (p as f64).sqrt();
        let res1 = sc(HookPoint::Res1)?;
        let res2 = sc(HookPoint::Res2)?;
        let int = IntModel {
            dims: IntDims {
                input_len: cfg.input_len,
                embed_dim: e,
                kernel: cfg.kernel,
                heads: cfg.heads,
                hidden: cfg.hidden,
                classes: cfg.classes,
                seq_len: s,
                rr_dim: cfg.rr_dim,
                rr_features: rr_n,
            },
            conv_w,
            embed_bias,
            embed_out: requant_from_ratio(s_in * cw_scale / s_embed)?,
            ln1,
            q,
            k,
            v,
            softmax: exp_consts(score_scale)?,
            ctx_out: requant_from_ratio(sc(HookPoint::V)? / SOFTMAX_ONE as f64 / sc(HookPoint::Ctx)?)?,
            attn_out,
            res1: add_requant_from_ratios(s_embed / res1, sc(HookPoint::AttnOut)? / res1)?,
            ln2,
            ff1,
            gelu1: gelu_consts(sc(HookPoint::Ff1)?, sc(HookPoint::Gelu1)?)?,
            ff2,
            gelu2: gelu_consts(sc(HookPoint::Ff2)?, sc(HookPoint::Gelu2)?)?,
            res2: add_requant_from_ratios(res1 / res2, sc(HookPoint::Gelu2)? / res2)?,
            ln3,
            pool_out: requant_from_ratio(sc(HookPoint::Ln3)? / s as f64 / s_concat)?,
            rr_w,
            rr_out: requant_from_ratio(sc(HookPoint::RrInput)? * rr_ws / s_concat)?,
            head_w,
            head_b: bias(TensorId::HeadB, s_concat * head_ws)?,
        };
        int.check()?;
        Ok(Self {
            config: cfg,
            scales: scales.clone(),
            weight_scales,
            logit_scale: s_concat * head_ws,
            int,
        })
    }

    pub fn quantize_input(&self, window: &[f64], rr: &[f64]) -> Result<QuantizedInput> {
        let window_scale = self.scales.get(HookPoint::Input)?;
        let rr_scale = self.scales.get(HookPoint::RrInput)?;
        Ok(QuantizedInput {
            window: quantize_tensor(window, window_scale),
            rr: quantize_tensor(rr, rr_scale),
            window_scale,
            rr_scale,
        })
    }

    /// Integer logits; the input must carry this model's input scales.
    pub fn int_logits(&self, input: &QuantizedInput) -> Result<Vec<i32>> {
        let expect = (
            self.scales.get(HookPoint::Input)?,
            self.scales.get(HookPoint::RrInput)?,
        );
        if (input.window_scale, input.rr_scale) != expect {
            return Err(Error::ScaleMismatch(format!(
                "input quantized at ({}, {}), model expects ({}, {})",
                input.window_scale, input.rr_scale, expect.0, expect.1
            )));
        }
        int_forward(&input.window, &input.rr, &self.int)
    }

    /// Dequantized logits of the integer pipeline.
    pub fn logits(&self, window: &[f64], rr: &[f64]) -> Result<Vec<f64>> {
        let q = self.int_logits(&self.quantize_input(window, rr)?)?;
        Ok(q.iter().map(|&v| f64::from(v) * self.logit_scale).collect())
    }

    /// The int8 values of a tensor and their scale, if it is stored as int8.
    pub fn int8_tensor(&self, id: TensorId) -> Option<(&[i8], f64)> {
        let m = &self.int;
        let data: &[i8] = match id {
            TensorId::ConvW => &m.conv_w,
            TensorId::RrW => &m.rr_w,
            TensorId::Wq => &m.q.w,
            TensorId::Wk => &m.k.w,
            TensorId::Wv => &m.v.w,
            TensorId::Wo => &m.attn_out.w,
            TensorId::Ff1W => &m.ff1.w,
            TensorId::Ff2W => &m.ff2.w,
            TensorId::HeadW => &m.head_w,
            TensorId::Ln1G => &m.ln1.gamma,
            TensorId::Ln2G => &m.ln2.gamma,
            TensorId::Ln3G => &m.ln3.gamma,
            _ => return None,
        };
        Some((data, *self.weight_scales.get(id.name())?))
    }
}

impl Classifier for QuantizedModel {
    fn classify(&self, beat: &BeatSample) -> Result<usize> {
        let ex = Example::from_beat(beat);
        let q = self.int_logits(&self.quantize_input(&ex.window, &ex.rr)?)?;
        Ok(predict_int(&q))
    }
}

/// Index of the largest integer logit (first one on ties).
pub fn predict_int(logits: &[i32]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QatConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Fine-tuning rate is the float `lr0` divided by this.
    pub lr_divisor: f64,
    pub ema_momentum: f64,
    pub plateau: PlateauConfig,
    pub seed: u64,
}

impl Default for QatConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 128,
            lr_divisor: 10.0,
            ema_momentum: 0.9,
            plateau: PlateauConfig::default(),
            seed: 0,
        }
    }
}

struct QatObjective {
    ema: EmaScales,
    best: ScaleTable,
}

impl Objective for QatObjective {
    fn batch(&mut self, params: &ModelParams, batch: &[&Example]) -> Result<(f64, GradientSet)> {
        let wq = fake_quant_weights(params);
        let table = &self.ema.table;
        // Gradients at the rounded weights pass straight to the float ones.
        let (loss, grads, hooks) = loss_and_grad_hooked(&wq, batch, || FakeQuant::new(table))?;
        let mut seen = RangeObserver::default();
        for h in &hooks {
            seen.merge(&h.observed);
        }
        self.ema.update(&seen);
        Ok((loss, grads))
    }

    fn evaluate(&self, params: &ModelParams, examples: &[&Example]) -> Result<(f64, f64)> {
        fake_quant_loss_and_accuracy(params, &self.ema.table, examples)
    }

    fn on_best(&mut self) {
        self.best = self.ema.table.clone();
    }
}

/// Mean loss and accuracy of the fake-quantized model.
pub fn fake_quant_loss_and_accuracy(
    params: &ModelParams,
    scales: &ScaleTable,
    examples: &[&Example],
) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let wq = fake_quant_weights(params);
    let per: Vec<(f64, bool)> = examples
        .par_iter()
        .map(|ex| {
            let logits = forward_cached(&wq, &ex.window, &ex.rr, &mut FakeQuant::new(scales))?.logits;
            Ok((
                softmax_cross_entropy(&logits, ex.label).0,
                predict(&logits) == ex.label,
            ))
        })
        .collect::<Result<_>>()?;
    let n = examples.len() as f64;
    Ok((
        per.iter().map(|p| p.0).sum::<f64>() / n,
        per.iter().filter(|p| p.1).count() as f64 / n,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QatOutcome {
    /// Float shadow parameters of the best epoch.
    pub params: ModelParams,
    pub scales: ScaleTable,
    pub model: QuantizedModel,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Fine-tunes with fake quantization from `scales` (usually from
/// [`calibrate`]), tracking activation scales by moving average, and exports
/// the epoch with the lowest fake-quantized validation loss.
pub fn qat_finetune(
    params: ModelParams,
    scales: ScaleTable,
    cfg: &QatConfig,
    lr0: f64,
    train: &[&Example],
    valid: &[&Example],
    on_epoch: impl FnMut(&EpochLog),
) -> Result<QatOutcome> {
    if !(cfg.lr_divisor > 0.0) || !(0.0..1.0).contains(&cfg.ema_momentum) {
        return Err(Error::Config(format!(
            "lr_divisor {} / ema_momentum {}",
            cfg.lr_divisor, cfg.ema_momentum
        )));
    }
    let mut objective = QatObjective {
        ema: EmaScales {
            table: scales.clone(),
            momentum: cfg.ema_momentum,
        },
        best: scales,
    };
    let opts = FitOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr0: lr0 / cfg.lr_divisor,
        plateau: cfg.plateau.clone(),
        seed: cfg.seed,
    };
    let out = fit(params, &mut objective, &opts, train, valid, on_epoch)?;
    let model = QuantizedModel::from_float(&out.params, &objective.best)?;
    Ok(QatOutcome {
        params: out.params,
        scales: objective.best,
        model,
        best_epoch: out.best_epoch,
        log: out.log,
    })
}
