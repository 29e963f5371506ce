use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::{seeding, Error, Result};

/// Every learnable tensor. Dense weights are stored `[in, out]` row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TensorId {
    /// `[k, E]`
    ConvW,
    ConvB,
    /// `[E, S]`
    PosEmbed,
    /// `[rr, rr]`, no bias.
    RrW,
    Ln1G,
    Ln1B,
    Wq,
    Bq,
    Wk,
    Bk,
    Wv,
    Bv,
    Wo,
    Bo,
    Ln2G,
    Ln2B,
    /// `[E, h]`
    Ff1W,
    Ff1B,
    /// `[h, E]`
    Ff2W,
    Ff2B,
    Ln3G,
    Ln3B,
    /// `[E + rr, classes]`
    HeadW,
    HeadB,
}

impl TensorId {
    pub const ALL: [TensorId; 24] = [
        TensorId::ConvW,
        TensorId::ConvB,
        TensorId::PosEmbed,
        TensorId::RrW,
        TensorId::Ln1G,
        TensorId::Ln1B,
        TensorId::Wq,
        TensorId::Bq,
        TensorId::Wk,
        TensorId::Bk,
        TensorId::Wv,
        TensorId::Bv,
        TensorId::Wo,
        TensorId::Bo,
        TensorId::Ln2G,
        TensorId::Ln2B,
        TensorId::Ff1W,
        TensorId::Ff1B,
        TensorId::Ff2W,
        TensorId::Ff2B,
        TensorId::Ln3G,
        TensorId::Ln3B,
        TensorId::HeadW,
        TensorId::HeadB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TensorId::ConvW => "conv_w",
            TensorId::ConvB => "conv_b",
            TensorId::PosEmbed => "pos_embed",
            TensorId::RrW => "rr_w",
            TensorId::Ln1G => "ln1_gamma",
            TensorId::Ln1B => "ln1_beta",
            TensorId::Wq => "wq",
            TensorId::Bq => "bq",
            TensorId::Wk => "wk",
            TensorId::Bk => "bk",
            TensorId::Wv => "wv",
            TensorId::Bv => "bv",
            TensorId::Wo => "wo",
            TensorId::Bo => "bo",
            TensorId::Ln2G => "ln2_gamma",
            TensorId::Ln2B => "ln2_beta",
            TensorId::Ff1W => "ff1_w",
            TensorId::Ff1B => "ff1_b",
            TensorId::Ff2W => "ff2_w",
            TensorId::Ff2B => "ff2_b",
            TensorId::Ln3G => "ln3_gamma",
            TensorId::Ln3B => "ln3_beta",
            TensorId::HeadW => "head_w",
            TensorId::HeadB => "head_b",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn shape(self, c: &ModelConfig) -> (usize, usize) {
        let (e, s, h) = (c.embed_dim, c.seq_len(), c.hidden);
        match self {
            TensorId::ConvW => (c.kernel, e),
            TensorId::PosEmbed => (e, s),
            TensorId::RrW => (c.rr_features(), c.rr_features()),
            TensorId::Wq | TensorId::Wk | TensorId::Wv | TensorId::Wo => (e, e),
            TensorId::Ff1W => (e, h),
            TensorId::Ff1B => (1, h),
            TensorId::Ff2W => (h, e),
            TensorId::HeadW => (c.head_in(), c.classes),
            TensorId::HeadB => (1, c.classes),
            TensorId::ConvB
            | TensorId::Ln1G
            | TensorId::Ln1B
            | TensorId::Bq
            | TensorId::Bk
            | TensorId::Bv
            | TensorId::Bo
            | TensorId::Ln2G
            | TensorId::Ln2B
            | TensorId::Ff2B
            | TensorId::Ln3G
            | TensorId::Ln3B => (1, e),
        }
    }

    /// Dense and convolution weights (as opposed to biases, norms, positions).
    pub fn is_weight_matrix(self) -> bool {
        matches!(
            self,
            TensorId::ConvW
                | TensorId::RrW
                | TensorId::Wq
                | TensorId::Wk
                | TensorId::Wv
                | TensorId::Wo
                | TensorId::Ff1W
                | TensorId::Ff2W
                | TensorId::HeadW
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub id: TensorId,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn layout(config: &ModelConfig) -> Vec<TensorSpec> {
    let mut offset = 0;
    TensorId::ALL
        .iter()
        .map(|&id| {
            let (rows, cols) = id.shape(config);
            let spec = TensorSpec {
                id,
                offset,
                rows,
                cols,
            };
            offset += rows * cols;
            spec
        })
        .collect()
}

/// All learnable scalars in one flat buffer, addressed per tensor. Gradients
/// use the same type and layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    layout: Vec<TensorSpec>,
    data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = layout(config);
        let n = layout.last().map_or(0, |t| t.offset + t.len());
        Ok(Self {
            config: config.clone(),
            layout,
            data: vec![0.0; n],
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            layout: self.layout.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn from_flat(config: &ModelConfig, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if data.len() != p.data.len() {
            return Err(Error::LengthMismatch {
                expected: p.data.len(),
                actual: data.len(),
            });
        }
        p.data = data;
        Ok(p)
    }

    /// Glorot-uniform dense and convolution weights, zero biases, unit layer
    /// norm gains and N(0, 0.02) positional embeddings.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = seeding::rng(seed, "init");
        let pos = Normal::new(0.0, 0.02).expect("valid sigma");
        for spec in p.layout.clone() {
            let t = &mut p.data[spec.offset..spec.offset + spec.len()];
            match spec.id {
                TensorId::Ln1G | TensorId::Ln2G | TensorId::Ln3G => t.fill(1.0),
                TensorId::PosEmbed => t.iter_mut().for_each(|v| *v = pos.sample(&mut rng)),
                id if id.is_weight_matrix() && !t.is_empty() => {
                    // Convolution fans count the kernel taps on both sides.
                    let (fan_in, fan_out) = if id == TensorId::ConvW {
                        (spec.rows, spec.rows * spec.cols)
                    } else {
                        (spec.rows, spec.cols)
                    };
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    t.iter_mut()
                        .for_each(|v| *v = rng.random_range(-limit..limit));
                }
                _ => {}
            }
        }
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &[TensorSpec] {
        &self.layout
    }

    pub fn spec(&self, id: TensorId) -> TensorSpec {
        self.layout[id as usize]
    }

    pub fn tensor(&self, id: TensorId) -> &[f64] {
        let s = self.spec(id);
        &self.data[s.offset..s.offset + s.len()]
    }

    pub fn tensor_mut(&mut self, id: TensorId) -> &mut [f64] {
        let s = self.spec(id);
        &mut self.data[s.offset..s.offset + s.len()]
    }

    /// Two distinct tensors borrowed mutably at once.
    pub fn tensor_pair_mut(&mut self, a: TensorId, b: TensorId) -> (&mut [f64], &mut [f64]) {
        let (sa, sb) = (self.spec(a), self.spec(b));
        assert!(
            sa.offset + sa.len() <= sb.offset,
            "{a:?} must precede {b:?}"
        );
        let (lo, hi) = self.data.split_at_mut(sb.offset);
        (
            &mut lo[sa.offset..sa.offset + sa.len()],
            &mut hi[..sb.len()],
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }
}
