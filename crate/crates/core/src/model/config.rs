use crate::error::{Error, Result};

/// Hyperparameters of the self-supervised objective and its training loop.
#[derive(Clone, Debug, PartialEq)]
pub struct HemiConfig {
    /// Embedding dimension `d`.
    pub dim: usize,
    /// Semantic-attention dimension `d_m`.
    pub attn_dim: usize,
    /// Weight of the fine-grain term; the coarse term gets `1 - lambda`.
    pub lambda: f64,
    pub seed: u64,
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    /// GCN layers per encoder, 1 or 2.
    pub layers: usize,
    /// One encoder for all meta-paths instead of one each.
    pub shared_encoder: bool,
    /// One pair of discriminator matrices for all meta-paths.
    pub shared_discriminators: bool,
    /// Use one corruption permutation for every meta-path in a step.
    pub share_corruption: bool,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub prelu_init: f64,
}

impl Default for HemiConfig {
    fn default() -> Self {
        HemiConfig {
            dim: 256,
            attn_dim: 16,
            lambda: 0.5,
            seed: 0,
            epochs: 1000,
            patience: 50,
            lr: 0.001,
            layers: 1,
            shared_encoder: false,
            shared_discriminators: false,
            share_corruption: true,
            clip_norm: Some(5.0),
            prelu_init: 0.25,
        }
    }
}

impl HemiConfig {
    /// Defaults for link-prediction representation training (`d = 64`).
    pub fn for_link_prediction() -> Self {
        HemiConfig {
            dim: 64,
            ..HemiConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.dim == 0 || self.attn_dim == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        if !(1..=2).contains(&self.layers) {
            return Err(Error::InvalidArgument(format!(
                "layers must be 1 or 2, got {}",
                self.layers
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad learning rate {}", self.lr)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!("bad clip norm {c}")));
            }
        }
        Ok(())
    }
}
