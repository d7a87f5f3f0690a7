use rand::Rng;

use super::{ModelConfig, ModelError};
use crate::geom::{KdTree, Vec3};
use crate::nn::{Graph, ParamStore, Tensor, Var};
use crate::rng::{stream, Stream};

fn init_linear<R: Rng>(store: &mut ParamStore, name: &str, i: usize, o: usize, zero: bool, rng: &mut R) {
    let a = (3.0 / i as f64).sqrt();
    let w = (0..i * o).map(|_| if zero { 0.0 } else { rng.random_range(-a..a) }).collect();
    store.insert(format!("{name}.w"), Tensor::from_vec(i, o, w).unwrap());
    store.insert(format!("{name}.b"), Tensor::zeros(1, o));
}

fn init_norm(store: &mut ParamStore, name: &str, c: usize) {
    store.insert(format!("{name}.g"), Tensor::from_vec(1, c, vec![1.0; c]).unwrap());
    store.insert(format!("{name}.b"), Tensor::zeros(1, c));
}

fn init_attention<R: Rng>(store: &mut ParamStore, name: &str, c: usize, rng: &mut R) {
    for p in ["q", "k", "v"] {
        init_linear(store, &format!("{name}.{p}"), c, c, false, rng);
    }
    // residual output projections start at zero so every block is an identity map
    init_linear(store, &format!("{name}.o"), c, c, true, rng);
}

fn init_ff<R: Rng>(store: &mut ParamStore, name: &str, c: usize, mult: usize, rng: &mut R) {
    init_linear(store, &format!("{name}.1"), c, mult * c, false, rng);
    init_linear(store, &format!("{name}.2"), mult * c, c, true, rng);
}

/// Adds encoder, blocks and final norm parameters under `prefix`.
pub(crate) fn init_trunk<R: Rng>(store: &mut ParamStore, prefix: &str, cfg: &ModelConfig, rng: &mut R) {
    let c = cfg.c_hidden;
    init_linear(store, &format!("{prefix}enc.embed"), cfg.c_in + 3, c, false, rng);
    init_norm(store, &format!("{prefix}enc.ln_q"), c);
    init_norm(store, &format!("{prefix}enc.ln_kv"), c);
    init_attention(store, &format!("{prefix}enc.attn"), c, rng);
    init_norm(store, &format!("{prefix}enc.ln_ff"), c);
    init_ff(store, &format!("{prefix}enc.ff"), c, cfg.ff_mult, rng);
    for b in 0..cfg.num_blocks {
        let p = format!("{prefix}blocks.{b}");
        init_norm(store, &format!("{p}.ln1"), c);
        init_attention(store, &format!("{p}.attn"), c, rng);
        init_norm(store, &format!("{p}.ln2"), c);
        init_ff(store, &format!("{p}.ff"), c, cfg.ff_mult, rng);
    }
    init_norm(store, &format!("{prefix}norm"), c);
}

pub(crate) fn init_head<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) {
    init_linear(store, "head", cfg.c_hidden, cfg.c_out, false, rng);
}

fn linear(g: &mut Graph, s: &ParamStore, name: &str, x: Var) -> Result<Var, ModelError> {
    let w = g.param(s, &format!("{name}.w"))?;
    let b = g.param(s, &format!("{name}.b"))?;
    Ok(g.linear(x, w, b)?)
}

fn norm(g: &mut Graph, s: &ParamStore, name: &str, x: Var) -> Result<Var, ModelError> {
    let w = g.param(s, &format!("{name}.g"))?;
    let b = g.param(s, &format!("{name}.b"))?;
    Ok(g.layer_norm(x, w, b)?)
}

fn mha(g: &mut Graph, s: &ParamStore, name: &str, xq: Var, xkv: Var, heads: usize) -> Result<Var, ModelError> {
    let q = linear(g, s, &format!("{name}.q"), xq)?;
    let k = linear(g, s, &format!("{name}.k"), xkv)?;
    let v = linear(g, s, &format!("{name}.v"), xkv)?;
    let a = g.attention(q, k, v, heads)?;
    linear(g, s, &format!("{name}.o"), a)
}

fn feed_forward(g: &mut Graph, s: &ParamStore, name: &str, x: Var) -> Result<Var, ModelError> {
    let h = linear(g, s, &format!("{name}.1"), x)?;
    let h = g.gelu(h);
    linear(g, s, &format!("{name}.2"), h)
}

pub(crate) fn positions_tensor(positions: &[Vec3]) -> Tensor {
    Tensor::from_vec(positions.len(), 3, positions.iter().flat_map(|p| p.to_array()).collect()).unwrap()
}

/// Cross-attention pooling from all fine points onto the coarse subset.
/// Returns `n_coarse × c_hidden`.
pub fn encode(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    cfg: &ModelConfig,
    features: Var,
    positions: Var,
    coarse_idx: &[usize],
) -> Result<Var, ModelError> {
    let p = |s: &str| format!("{prefix}enc.{s}");
    let x = g.concat_cols(&[features, positions])?;
    let h = linear(g, store, &p("embed"), x)?;
    let q_in = g.gather_rows(h, coarse_idx)?;
    let q = norm(g, store, &p("ln_q"), q_in)?;
    let kv = norm(g, store, &p("ln_kv"), h)?;
    let a = mha(g, store, &p("attn"), q, kv, cfg.num_heads)?;
    let z = g.add(q_in, a)?;
    let f = norm(g, store, &p("ln_ff"), z)?;
    let f = feed_forward(g, store, &p("ff"), f)?;
    Ok(g.add(z, f)?)
}

/// Pre-norm self-attention blocks. With zero output projections this is the identity.
pub fn self_attention_stack(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    cfg: &ModelConfig,
    latent: Var,
) -> Result<Var, ModelError> {
    let mut x = latent;
    for b in 0..cfg.num_blocks {
        let p = format!("{prefix}blocks.{b}");
        let h = norm(g, store, &format!("{p}.ln1"), x)?;
        let a = mha(g, store, &format!("{p}.attn"), h, h, cfg.num_heads)?;
        x = g.add(x, a)?;
        let h = norm(g, store, &format!("{p}.ln2"), x)?;
        let f = feed_forward(g, store, &format!("{p}.ff"), h)?;
        x = g.add(x, f)?;
    }
    Ok(x)
}

/// Layer norm applied to the stack output before the head or fusion.
pub(crate) fn final_norm(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Result<Var, ModelError> {
    norm(g, store, &format!("{prefix}norm"), x)
}

/// Three nearest coarse points per fine point with weights `1/(d² + 1e-8)`
/// normalized to sum to one.
pub fn interpolation_weights(coarse: &[Vec3], fine: &[Vec3]) -> Result<(Vec<[usize; 3]>, Vec<[f64; 3]>), ModelError> {
    if coarse.len() < 3 {
        return Err(ModelError::TooFewCoarse(coarse.len()));
    }
    let tree = KdTree::new(coarse);
    let mut idx = Vec::with_capacity(fine.len());
    let mut w = Vec::with_capacity(fine.len());
    for &f in fine {
        let nb = tree.query(f, 3);
        let raw: [f64; 3] = std::array::from_fn(|j| 1.0 / (nb.distances[j] * nb.distances[j] + 1e-8));
        let s: f64 = raw.iter().sum();
        idx.push([nb.indices[0], nb.indices[1], nb.indices[2]]);
        w.push(raw.map(|r| r / s));
    }
    Ok((idx, w))
}

/// Interpolates coarse features to the fine points, then applies the head.
pub fn decode_interpolate(
    g: &mut Graph,
    store: &ParamStore,
    latent: Var,
    coarse_pos: &[Vec3],
    fine_pos: &[Vec3],
) -> Result<Var, ModelError> {
    let (idx, w) = interpolation_weights(coarse_pos, fine_pos)?;
    let x = g.interpolate(latent, idx, w)?;
    linear(g, store, "head", x)
}

/// Intermediate and final nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub encoded: Var,
    pub latent: Var,
    pub output: Var,
}

#[derive(Debug, Clone)]
pub struct VatrModel {
    pub config: ModelConfig,
    pub store: ParamStore,
}

impl VatrModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = stream(seed, Stream::Init);
        let mut store = ParamStore::new();
        init_trunk(&mut store, "", &config, &mut rng);
        init_head(&mut store, &config, &mut rng);
        Ok(Self { config, store })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        features: &Tensor,
        positions: &[Vec3],
        coarse_idx: &[usize],
        decode: bool,
    ) -> Result<Forward, ModelError> {
        vatr_forward(g, self, features, positions, coarse_idx, decode)
    }
}

/// Full single-branch forward. With `decode == false` the head is applied to
/// the coarse tokens (`n_coarse × c_out`), otherwise to interpolated fine
/// points (`n_fine × c_out`).
pub fn vatr_forward(
    g: &mut Graph,
    model: &VatrModel,
    features: &Tensor,
    positions: &[Vec3],
    coarse_idx: &[usize],
    decode: bool,
) -> Result<Forward, ModelError> {
    let cfg = &model.config;
    check_inputs(cfg.c_in, features, positions)?;
    let f = g.constant(features.clone());
    let p = g.constant(positions_tensor(positions));
    let encoded = encode(g, &model.store, "", cfg, f, p, coarse_idx)?;
    let latent = self_attention_stack(g, &model.store, "", cfg, encoded)?;
    let normed = final_norm(g, &model.store, "", latent)?;
    let output = if decode {
        let coarse: Vec<Vec3> = coarse_idx.iter().map(|&i| positions[i]).collect();
        decode_interpolate(g, &model.store, normed, &coarse, positions)?
    } else {
        linear(g, &model.store, "head", normed)?
    };
    Ok(Forward { encoded, latent, output })
}

pub(crate) fn check_inputs(c_in: usize, features: &Tensor, positions: &[Vec3]) -> Result<(), ModelError> {
    if features.cols != c_in || features.rows != positions.len() {
        return Err(ModelError::Nn(crate::nn::NnError::ShapeMismatch {
            op: "forward",
            detail: format!(
                "features {}x{} for {} points and c_in {c_in}",
                features.rows,
                features.cols,
                positions.len()
            ),
        }));
    }
    Ok(())
}

pub(crate) fn head_linear(g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, ModelError> {
    linear(g, store, "head", x)
}

pub(crate) fn fuse_linear(g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, ModelError> {
    linear(g, store, "fuse", x)
}

pub(crate) fn init_fuse<R: Rng>(store: &mut ParamStore, i: usize, o: usize, rng: &mut R) {
    init_linear(store, "fuse", i, o, false, rng);
}
