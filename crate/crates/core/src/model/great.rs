use super::vatr::{check_inputs, encode, final_norm, fuse_linear, head_linear, init_fuse, init_head, init_trunk, positions_tensor, self_attention_stack, Forward};
use super::{decode_interpolate, ModelConfig, ModelError};
use crate::geom::Vec3;
use crate::nn::{Graph, ParamStore, Tensor};
use crate::rng::{stream, Stream};

/// Frozen pre-trained trunk (`b1.`) feeding, by channel concatenation and a
/// learned projection, into a trainable trunk (`b2.`) and head.
#[derive(Debug, Clone)]
pub struct GreatModel {
    /// Trainable branch: task features in, task classes out.
    pub config: ModelConfig,
    /// Frozen branch; its `c_in` is 3 (positions only).
    pub frozen_config: ModelConfig,
    pub store: ParamStore,
}

impl GreatModel {
    /// Random initialization of both branches; branch 1 is frozen.
    pub fn new(config: ModelConfig, frozen_config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        frozen_config.validate()?;
        if frozen_config.c_in != 3 {
            return Err(ModelError::BadConfig("frozen branch must take positions only (c_in = 3)".into()));
        }
        let mut rng = stream(seed, Stream::Init);
        let mut store = ParamStore::new();
        init_trunk(&mut store, "b2.", &config, &mut rng);
        // same draw order as the single-branch model so `b2.` and the head start
        // from the weights a scratch baseline with this seed would get
        init_head(&mut store, &config, &mut rng);
        init_fuse(&mut store, config.c_hidden + frozen_config.c_hidden, config.c_hidden, &mut rng);
        init_trunk(&mut store, "b1.", &frozen_config, &mut rng);
        store.freeze_prefix("b1.");
        Ok(Self {
            config,
            frozen_config,
            store,
        })
    }

    /// Copies a pre-trained single-branch trunk into branch 1. Its head is ignored.
    pub fn load_pretrained(&mut self, pretrained: &ParamStore) -> Result<usize, ModelError> {
        let n = self
            .store
            .copy_from(pretrained, |name| (!name.starts_with("head.")).then(|| format!("b1.{name}")))?;
        self.store.freeze_prefix("b1.");
        Ok(n)
    }

    pub fn forward(&self, g: &mut Graph, features: &Tensor, positions: &[Vec3], coarse_idx: &[usize]) -> Result<Forward, ModelError> {
        great_forward(g, self, features, positions, coarse_idx)
    }

    /// Forward pass reading parameters from `store` (same layout as `self.store`).
    pub fn forward_with(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        features: &Tensor,
        positions: &[Vec3],
        coarse_idx: &[usize],
    ) -> Result<Forward, ModelError> {
        forward_impl(g, store, &self.config, &self.frozen_config, features, positions, coarse_idx)
    }
}

/// `head ∘ norm ∘ β₂ ∘ fuse(ε₂(features) ∥ norm ∘ β₁ ∘ ε₁(positions))`, both branches on the
/// same coarse indices. Decodes to fine resolution when `config.decode` is set.
pub fn great_forward(
    g: &mut Graph,
    model: &GreatModel,
    features: &Tensor,
    positions: &[Vec3],
    coarse_idx: &[usize],
) -> Result<Forward, ModelError> {
    forward_impl(g, &model.store, &model.config, &model.frozen_config, features, positions, coarse_idx)
}

fn forward_impl(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &ModelConfig,
    frozen_cfg: &ModelConfig,
    features: &Tensor,
    positions: &[Vec3],
    coarse_idx: &[usize],
) -> Result<Forward, ModelError> {
    check_inputs(cfg.c_in, features, positions)?;
    let pos = positions_tensor(positions);
    let f = g.constant(features.clone());
    let p = g.constant(pos.clone());
    let e2 = encode(g, store, "b2.", cfg, f, p, coarse_idx)?;
    let p1 = g.constant(pos);
    let e1 = encode(g, store, "b1.", frozen_cfg, p1, p, coarse_idx)?;
    let b1 = self_attention_stack(g, store, "b1.", frozen_cfg, e1)?;
    let f1 = final_norm(g, store, "b1.", b1)?;
    let cat = g.concat_cols(&[e2, f1])?;
    let encoded = fuse_linear(g, store, cat)?;
    let latent = self_attention_stack(g, store, "b2.", cfg, encoded)?;
    let normed = final_norm(g, store, "b2.", latent)?;
    let output = if cfg.decode {
        let coarse: Vec<Vec3> = coarse_idx.iter().map(|&i| positions[i]).collect();
        decode_interpolate(g, store, normed, &coarse, positions)?
    } else {
        head_linear(g, store, normed)?
    };
    Ok(Forward { encoded, latent, output })
}
