use great_core::geom::Vec3;
use great_core::model::{
    encode, great_forward, interpolation_weights, sample_coarse, self_attention_stack, vatr_forward, GreatModel, ModelConfig,
    VatrModel,
};
use great_core::nn::gradcheck::check_params;
use great_core::nn::{adam_step, AdamConfig, Graph, ParamStore, Tensor};
use great_core::rng::{stream, Stream};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(c_in: usize, c_out: usize, decode: bool) -> ModelConfig {
    ModelConfig {
        c_in,
        c_out,
        c_hidden: 8,
        num_blocks: 2,
        num_heads: 2,
        n_coarse: 4,
        ff_mult: 2,
        decode,
    }
}

fn cloud(n: usize, c_in: usize, seed: u64) -> (Vec<Vec3>, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let feats = Tensor::from_vec(n, c_in, (0..n * c_in).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    (pos, feats)
}

/// Overwrites every parameter (zero-initialized ones included) with random values.
fn randomize(store: &mut ParamStore, seed: u64, frozen_too: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in store.params_mut() {
        if p.frozen && !frozen_too {
            continue;
        }
        p.value.data.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
}

fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    perm
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    Tensor::from_vec(t.rows, t.cols, perm.iter().flat_map(|&i| t.row(i).to_vec()).collect()).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn encode_only(model: &VatrModel, feats: &Tensor, pos: &[Vec3], idx: &[usize]) -> Tensor {
    let mut g = Graph::new();
    let f = g.constant(feats.clone());
    let p = g.constant(Tensor::from_vec(pos.len(), 3, pos.iter().flat_map(|p| p.to_array()).collect()).unwrap());
    let e = encode(&mut g, &model.store, "", &model.config, f, p, idx).unwrap();
    g.value(e).clone()
}

#[test]
fn encoder_is_invariant_to_fine_point_order() {
    let mut model = VatrModel::new(tiny(4, 3, false), 1).unwrap();
    randomize(&mut model.store, 2, false);
    let (pos, feats) = cloud(30, 4, 3);
    let idx = vec![3, 17, 8, 22];
    let base = encode_only(&model, &feats, &pos, &idx);
    // new row r holds old row perm[r]; old index i lives at inv[i]
    let perm = random_permutation(30, 4);
    let mut inv = vec![0; 30];
    for (r, &o) in perm.iter().enumerate() {
        inv[o] = r;
    }
    let pos2: Vec<Vec3> = perm.iter().map(|&i| pos[i]).collect();
    let idx2: Vec<usize> = idx.iter().map(|&i| inv[i]).collect();
    let out = encode_only(&model, &permute_rows(&feats, &perm), &pos2, &idx2);
    assert!(max_abs_diff(&base.data, &out.data) < 1e-6);
}

#[test]
fn encoder_handles_a_single_point_and_duplicates() {
    let mut model = VatrModel::new(tiny(4, 3, false), 1).unwrap();
    randomize(&mut model.store, 5, false);
    let (pos, feats) = cloud(1, 4, 6);
    assert_eq!(encode_only(&model, &feats, &pos, &[0]).shape(), [1, 8]);

    let (pos, feats) = cloud(12, 4, 7);
    let idx = [0, 5, 9, 11];
    let base = encode_only(&model, &feats, &pos, &idx);
    let pos2: Vec<Vec3> = pos.iter().chain(&pos).copied().collect();
    let mut data = feats.data.clone();
    data.extend_from_slice(&feats.data);
    let out = encode_only(&model, &Tensor::from_vec(24, 4, data).unwrap(), &pos2, &idx);
    assert!(max_abs_diff(&base.data, &out.data) < 1e-6);
}

fn stack_only(model: &VatrModel, x: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let y = self_attention_stack(&mut g, &model.store, "", &model.config, v).unwrap();
    g.value(y).clone()
}

#[test]
fn stack_is_identity_at_init_and_permutation_equivariant() {
    let model = VatrModel::new(tiny(3, 3, false), 8).unwrap();
    let (_, x) = cloud(6, 8, 9);
    assert_eq!(stack_only(&model, &x), x);

    let mut trained = model.clone();
    randomize(&mut trained.store, 10, false);
    let perm = random_permutation(6, 11);
    let a = permute_rows(&stack_only(&trained, &x), &perm);
    let b = stack_only(&trained, &permute_rows(&x, &perm));
    assert!(max_abs_diff(&a.data, &b.data) < 1e-6);
}

#[test]
fn stack_gradient_check_on_four_tokens() {
    let mut model = VatrModel::new(tiny(3, 3, false), 12).unwrap();
    randomize(&mut model.store, 13, false);
    let (_, x) = cloud(4, 8, 14);
    let r = check_params(&model.store, 1e-5, 1e-4, |g, s| {
        let v = g.constant(x.clone());
        let y = self_attention_stack(g, s, "", &model.config, v).map_err(|e| match e {
            great_core::model::ModelError::Nn(n) => n,
            other => panic!("{other}"),
        })?;
        let sq = g.mul(y, y)?;
        Ok(g.sum(sq))
    })
    .unwrap();
    assert!(r.max_rel_err < 1e-5, "{}", r.max_rel_err);
}

#[test]
fn output_shapes_and_shared_upstream_activations() {
    let model = VatrModel::new(ModelConfig { c_out: 16, ..tiny(3, 16, false) }, 15).unwrap();
    let (pos, feats) = cloud(40, 3, 16);
    let idx = sample_coarse(40, 10, &mut stream(1, Stream::Sampling)).unwrap();
    let mut g = Graph::new();
    let coarse = vatr_forward(&mut g, &model, &feats, &pos, &idx, false).unwrap();
    let fine = vatr_forward(&mut g, &model, &feats, &pos, &idx, true).unwrap();
    assert_eq!(g.value(coarse.output).shape(), [10, 16]);
    assert_eq!(g.value(fine.output).shape(), [40, 16]);
    assert_eq!(g.value(coarse.encoded), g.value(fine.encoded));
    assert_eq!(g.value(coarse.latent), g.value(fine.latent));

    let seg = VatrModel::new(tiny(13, 3, true), 15).unwrap();
    let (pos, feats) = cloud(40, 13, 17);
    let mut g = Graph::new();
    let out = vatr_forward(&mut g, &seg, &feats, &pos, &idx, true).unwrap();
    assert_eq!(g.value(out.output).shape(), [40, 3]);
}

#[test]
fn decoder_weights_partition_unity_and_preserve_constants() {
    let (pos, _) = cloud(200, 1, 18);
    let coarse: Vec<Vec3> = pos[..20].to_vec();
    let (idx, w) = interpolation_weights(&coarse, &pos).unwrap();
    for ws in &w {
        assert!((ws.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let mut g = Graph::new();
    let c = g.constant(Tensor::from_vec(20, 2, [0.7, -1.3].repeat(20)).unwrap());
    let y = g.interpolate(c, idx, w).unwrap();
    for r in 0..200 {
        assert!((g.value(y).get(r, 0) - 0.7).abs() < 1e-10 && (g.value(y).get(r, 1) + 1.3).abs() < 1e-10);
    }
}

fn great_toy(seed: u64) -> GreatModel {
    let mut m = GreatModel::new(tiny(5, 3, true), tiny(3, 16, false), seed).unwrap();
    randomize(&mut m.store, seed + 100, true);
    m
}

#[test]
fn great_with_branch_one_columns_zeroed_is_a_plain_model() {
    let mut great = great_toy(20);
    let c = 8;
    let fuse = &mut great.store.get_mut("fuse.w").unwrap().value;
    for r in 0..2 * c {
        for k in 0..c {
            fuse.data[r * c + k] = if r == k { 1.0 } else { 0.0 };
        }
    }
    great.store.get_mut("fuse.b").unwrap().value.data.fill(0.0);

    let mut plain = VatrModel::new(tiny(5, 3, true), 0).unwrap();
    plain
        .store
        .copy_from(&great.store, |n| n.strip_prefix("b2.").map(String::from).or_else(|| n.starts_with("head.").then(|| n.to_string())))
        .unwrap();
    let (pos, feats) = cloud(25, 5, 21);
    let idx = [1, 4, 9, 16, 20];
    let mut g = Graph::new();
    let a = great_forward(&mut g, &great, &feats, &pos, &idx).unwrap();
    let b = vatr_forward(&mut g, &plain, &feats, &pos, &idx, true).unwrap();
    assert!(max_abs_diff(&g.value(a.output).data, &g.value(b.output).data) < 1e-10);
}

fn great_loss_step(model: &mut GreatModel, feats: &Tensor, pos: &[Vec3], labels: &[usize], seed: u64) {
    let idx = sample_coarse(pos.len(), 4, &mut stream(seed, Stream::Sampling)).unwrap();
    let mut g = Graph::new();
    let out = great_forward(&mut g, model, feats, pos, &idx).unwrap();
    let loss = g.cross_entropy(out.output, labels).unwrap();
    g.backward(loss).unwrap();
    model.store.zero_grad();
    model.store.accumulate(&g, 1.0);
    adam_step(&mut model.store, &AdamConfig { lr: 1e-2, ..AdamConfig::default() });
}

#[test]
fn frozen_branch_is_bit_identical_after_100_steps() {
    let mut m = great_toy(30);
    let (pos, feats) = cloud(12, 5, 31);
    let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
    let snapshot: Vec<(String, Vec<u64>)> = m
        .store
        .params()
        .iter()
        .filter(|p| p.name.starts_with("b1."))
        .map(|p| (p.name.clone(), p.value.data.iter().map(|v| v.to_bits()).collect()))
        .collect();
    let head_before = m.store.get("head.w").unwrap().value.clone();
    for s in 0..100 {
        great_loss_step(&mut m, &feats, &pos, &labels, s);
    }
    for (name, bits) in snapshot {
        let now: Vec<u64> = m.store.get(&name).unwrap().value.data.iter().map(|v| v.to_bits()).collect();
        assert_eq!(now, bits, "{name}");
        assert_eq!(m.store.get(&name).unwrap().step(), 0);
    }
    assert_ne!(m.store.get("head.w").unwrap().value, head_before);
}

#[test]
fn great_gradient_check_on_eight_points() {
    let m = great_toy(40);
    let (pos, feats) = cloud(8, 5, 41);
    let labels = [0, 1, 2, 2, 1, 0, 1, 2];
    let idx = [0, 3, 5, 6];
    let r = check_params(&m.store, 1e-5, 1e-4, |g, s| {
        let out = m.forward_with(g, s, &feats, &pos, &idx).map_err(|e| match e {
            great_core::model::ModelError::Nn(n) => n,
            other => panic!("{other}"),
        })?;
        g.cross_entropy(out.output, &labels)
    })
    .unwrap();
    assert!(r.checked > 1000);
    assert!(r.max_rel_err < 1e-5, "{}", r.max_rel_err);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn great_is_permutation_equivariant(seed in 0u64..1000) {
        let m = great_toy(seed);
        let (pos, feats) = cloud(30, 5, seed + 1);
        let idx = sample_coarse(30, 6, &mut stream(seed, Stream::Sampling)).unwrap();
        let perm = random_permutation(30, seed + 2);
        let mut inv = vec![0; 30];
        for (r, &o) in perm.iter().enumerate() {
            inv[o] = r;
        }
        let pos2: Vec<Vec3> = perm.iter().map(|&i| pos[i]).collect();
        let idx2: Vec<usize> = idx.iter().map(|&i| inv[i]).collect();
        let mut g = Graph::new();
        let a = great_forward(&mut g, &m, &feats, &pos, &idx).unwrap();
        let b = great_forward(&mut g, &m, &permute_rows(&feats, &perm), &pos2, &idx2).unwrap();
        let expect = permute_rows(g.value(a.output), &perm);
        prop_assert!(max_abs_diff(&expect.data, &g.value(b.output).data) < 1e-6);
    }
}
