//! The float transformer: convolutional patch embedding, learned positions,
//! one pre-norm encoder block and a mean-pooled head that also sees the RR
//! features. Also the analytic parameter, op and memory estimators.

mod checkpoint;
mod complexity;
mod forward;
mod layers;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use complexity::{count_macs, count_ops_and_memory, count_params, footprint_bytes, Complexity};
pub use forward::{forward, forward_cached, predict, ActHook, Cache, HookPoint, NoHook};
pub use layers::{
    add_positions, attention, attention_core, conv_embed, conv_tokens, gelu, gelu_grad, layer_norm,
    layer_norm_rows, linear, softmax_in_place, Activation, LnCache, LN_EPS,
};
pub use params::{ModelParams, TensorId, TensorSpec};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_len: usize,
    /// Embedding width E.
    pub embed_dim: usize,
    /// Convolution kernel k; the stride equals k.
    pub kernel: usize,
    pub heads: usize,
    /// Feed-forward width h.
    pub hidden: usize,
    pub classes: usize,
    pub rr_dim: usize,
    /// When false the RR projection is absent and the head sees only the
    /// pooled encoder output.
    pub use_rr: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_len: 198,
            embed_dim: 16,
            kernel: 3,
            heads: 8,
            hidden: 128,
            classes: 5,
            rr_dim: 2,
            use_rr: true,
        }
    }
}

impl ModelConfig {
    /// Number of tokens S = floor(input_len / k).
    pub fn seq_len(&self) -> usize {
        self.input_len / self.kernel.max(1)
    }

    /// Per-head projection size P = E / H.
    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads.max(1)
    }

    /// Width of the RR embedding actually fed to the head.
    pub fn rr_features(&self) -> usize {
        if self.use_rr {
            self.rr_dim
        } else {
            0
        }
    }

    /// Head input width: pooled embedding plus RR features.
    pub fn head_in(&self) -> usize {
        self.embed_dim + self.rr_features()
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("input_len", self.input_len),
            ("embed_dim", self.embed_dim),
            ("kernel", self.kernel),
            ("heads", self.heads),
            ("hidden", self.hidden),
            ("classes", self.classes),
        ];
        if let Some((name, _)) = fields.iter().find(|f| f.1 == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.input_len % self.kernel != 0 {
            return Err(Error::Config(format!(
                "input_len {} not divisible by kernel {}",
                self.input_len, self.kernel
            )));
        }
        if self.use_rr && self.rr_dim == 0 {
            return Err(Error::Config(
                "rr_dim must be positive when RR is used".into(),
            ));
        }
        Ok(())
    }
}
