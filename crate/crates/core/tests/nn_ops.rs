use great_core::nn::gradcheck::check_inputs;
use great_core::nn::{Graph, NnError, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-4;
const TOL: f64 = 1e-5;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Contracts an arbitrary-shaped output with fixed random weights so every
/// output entry carries a distinct gradient.
fn project(g: &mut Graph, y: Var, seed: u64) -> Result<Var, NnError> {
    let t = g.value(y).clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(random(t.rows, t.cols, &mut rng));
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

fn check(name: &str, inputs: Vec<Tensor>, f: impl Fn(&mut Graph, &[Var]) -> Result<Var, NnError>) {
    let r = check_inputs(&inputs, STEP, FLOOR, |g, v| {
        let y = f(g, v)?;
        project(g, y, 99)
    })
    .unwrap();
    assert!(r.max_rel_err < TOL, "{name}: {}", r.max_rel_err);
    assert!(r.checked > 0);
}

#[test]
fn every_op_passes_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut r = |a, b| random(a, b, &mut rng);
    check("matmul", vec![r(3, 4), r(4, 2)], |g, v| g.matmul(v[0], v[1]));
    check("matmul_nt", vec![r(3, 4), r(5, 4)], |g, v| g.matmul_nt(v[0], v[1]));
    check("add", vec![r(3, 4), r(3, 4)], |g, v| g.add(v[0], v[1]));
    check("add_row", vec![r(3, 4), r(1, 4)], |g, v| g.add_row(v[0], v[1]));
    check("mul", vec![r(3, 4), r(3, 4)], |g, v| g.mul(v[0], v[1]));
    check("scale", vec![r(2, 3)], |g, v| Ok(g.scale(v[0], -1.7)));
    check("concat", vec![r(3, 2), r(3, 4)], |g, v| g.concat_cols(&[v[0], v[1]]));
    check("slice", vec![r(3, 5)], |g, v| g.slice_cols(v[0], 1, 3));
    check("gather", vec![r(4, 3)], |g, v| g.gather_rows(v[0], &[3, 0, 3, 1]));
    check("softmax", vec![r(3, 5)], |g, v| Ok(g.softmax(v[0])));
    check("layer_norm", vec![r(3, 6), r(1, 6), r(1, 6)], |g, v| g.layer_norm(v[0], v[1], v[2]));
    check("gelu", vec![r(4, 4)], |g, v| Ok(g.gelu(v[0])));
    check("linear", vec![r(3, 4), r(4, 2), r(1, 2)], |g, v| g.linear(v[0], v[1], v[2]));
    check("attention", vec![r(3, 8), r(5, 8), r(5, 8)], |g, v| g.attention(v[0], v[1], v[2], 2));
    check("interpolate", vec![r(4, 3)], |g, v| {
        g.interpolate(v[0], vec![[0, 1, 2], [3, 3, 1]], vec![[0.2, 0.3, 0.5], [0.6, 0.1, 0.3]])
    });
    check("sum", vec![r(2, 3)], |g, v| Ok(g.sum(v[0])));
    let labels = [2usize, 0, 1, 1];
    check("cross_entropy", vec![r(4, 3)], |g, v| g.cross_entropy(v[0], &labels));
    // offsets keep every |pred − target| away from the kink
    let target = r(3, 3);
    check("l1", vec![r(3, 3)], move |g, v| {
        let shifted: Vec<f64> = target.data.iter().enumerate().map(|(i, t)| t + if i % 2 == 0 { 3.0 } else { -3.0 }).collect();
        let t = g.constant(Tensor::from_vec(3, 3, shifted).unwrap());
        g.l1_loss(v[0], t)
    });
}

#[test]
fn fused_attention_matches_composed_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (q, k, v) = (random(4, 6, &mut rng), random(7, 6, &mut rng), random(7, 6, &mut rng));
    let mut g = Graph::new();
    let (qv, kv, vv) = (g.constant(q), g.constant(k), g.constant(v));
    let fused = g.attention(qv, kv, vv, 3).unwrap();
    let mut heads = Vec::new();
    for h in 0..3 {
        let qh = g.slice_cols(qv, 2 * h, 2).unwrap();
        let kh = g.slice_cols(kv, 2 * h, 2).unwrap();
        let vh = g.slice_cols(vv, 2 * h, 2).unwrap();
        let s = g.matmul_nt(qh, kh).unwrap();
        let s = g.scale(s, 1.0 / 2f64.sqrt());
        let p = g.softmax(s);
        heads.push(g.matmul(p, vh).unwrap());
    }
    let composed = g.concat_cols(&heads).unwrap();
    for (a, b) in g.value(fused).data.iter().zip(&g.value(composed).data) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn l1_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (p, t) = (random(50, 16, &mut rng), random(50, 16, &mut rng));
    let mut oracle = 0.0;
    for i in 0..50 * 16 {
        oracle += (p.data[i] - t.data[i]).abs();
    }
    oracle /= 800.0;
    let mut g = Graph::new();
    let (pv, tv) = (g.constant(p), g.constant(t));
    let l = g.l1_loss(pv, tv).unwrap();
    assert!((g.value(l).item() - oracle).abs() < 1e-14);
}

#[test]
fn cross_entropy_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(20, 3, &mut rng);
    let labels: Vec<usize> = (0..20).map(|_| rng.random_range(0..3)).collect();
    let mut oracle = 0.0;
    for i in 0..20 {
        let z: f64 = (0..3).map(|j| x.get(i, j).exp()).sum();
        oracle += -(x.get(i, labels[i]).exp() / z).ln();
    }
    oracle /= 20.0;
    let mut g = Graph::new();
    let xv = g.constant(x);
    let l = g.cross_entropy(xv, &labels).unwrap();
    assert!((g.value(l).item() - oracle).abs() < 1e-12);
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(
        vals in proptest::collection::vec(-30.0..30.0f64, 12),
        shift in -100.0..100.0f64,
    ) {
        let x = Tensor::from_vec(3, 4, vals.clone()).unwrap();
        let shifted = Tensor::from_vec(3, 4, vals.iter().map(|v| v + shift).collect()).unwrap();
        let mut g = Graph::new();
        let (a, b) = (g.constant(x), g.constant(shifted));
        let (sa, sb) = (g.softmax(a), g.softmax(b));
        for r in 0..3 {
            let row = g.value(sa).row(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (p, q) in row.iter().zip(g.value(sb).row(r)) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
