//! Cross-attention point-cloud transformer and its two-branch fused variant.
//!
//! A forward pass pools the fine cloud onto a random coarse subset with one
//! cross-attention layer, runs pre-norm self-attention blocks on the coarse
//! tokens, and either predicts at the coarse points directly or interpolates
//! back to every fine point from its three nearest coarse neighbors.

mod great;
mod vatr;

pub use great::{great_forward, GreatModel};
pub use vatr::{
    decode_interpolate, encode, interpolation_weights, self_attention_stack, vatr_forward, Forward, VatrModel,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("decoder needs at least 3 coarse points, got {0}")]
    TooFewCoarse(usize),
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl ModelError {
    pub fn category(&self) -> &'static str {
        match self {
            ModelError::TooFewPoints { .. } => "TooFewPoints",
            ModelError::TooFewCoarse(_) => "TooFewCoarse",
            ModelError::BadConfig(_) => "BadConfig",
            ModelError::Nn(e) => e.category(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub c_in: usize,
    pub c_out: usize,
    pub c_hidden: usize,
    pub num_blocks: usize,
    pub num_heads: usize,
    pub n_coarse: usize,
    /// Hidden width of the feed-forward layers as a multiple of `c_hidden`.
    pub ff_mult: usize,
    pub decode: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            c_in: 3,
            c_out: 16,
            c_hidden: 128,
            num_blocks: 8,
            num_heads: 8,
            n_coarse: 1000,
            ff_mult: 2,
            decode: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::BadConfig(m));
        if self.c_hidden == 0 || self.num_heads == 0 || self.c_hidden % self.num_heads != 0 {
            return bad(format!("c_hidden {} not divisible by num_heads {}", self.c_hidden, self.num_heads));
        }
        if self.n_coarse < 4 {
            return bad(format!("n_coarse {} < 4", self.n_coarse));
        }
        if self.c_out == 0 || self.ff_mult == 0 {
            return bad("c_out and ff_mult must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.c_hidden / self.num_heads
    }
}

fn linear_count(i: usize, o: usize) -> usize {
    i * o + o
}

fn attention_count(c: usize) -> usize {
    4 * linear_count(c, c)
}

fn ff_count(c: usize, mult: usize) -> usize {
    linear_count(c, mult * c) + linear_count(mult * c, c)
}

/// Scalars in one self-attention block.
pub fn block_param_count(cfg: &ModelConfig) -> usize {
    let c = cfg.c_hidden;
    2 * 2 * c + attention_count(c) + ff_count(c, cfg.ff_mult)
}

/// Scalars in the encoder (embedding, cross-attention, feed-forward).
pub fn encoder_param_count(cfg: &ModelConfig) -> usize {
    let c = cfg.c_hidden;
    linear_count(cfg.c_in + 3, c) + 3 * 2 * c + attention_count(c) + ff_count(c, cfg.ff_mult)
}

/// Trainable scalars of a single-branch model: encoder, blocks, final norm, head.
pub fn param_count(cfg: &ModelConfig) -> usize {
    encoder_param_count(cfg) + cfg.num_blocks * block_param_count(cfg) + 2 * cfg.c_hidden + linear_count(cfg.c_hidden, cfg.c_out)
}

/// Uniform sample of `n_coarse` distinct indices from `0..n_fine`.
pub fn sample_coarse<R: Rng + ?Sized>(n_fine: usize, n_coarse: usize, rng: &mut R) -> Result<Vec<usize>, ModelError> {
    if n_coarse > n_fine || n_coarse == 0 {
        return Err(ModelError::TooFewPoints { need: n_coarse.max(1), got: n_fine });
    }
    Ok(rand::seq::index::sample(rng, n_fine, n_coarse).into_vec())
}
