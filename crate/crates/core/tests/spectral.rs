use great_core::geom::primitives::{fibonacci_sphere, icosphere};
use great_core::geom::{TriangleMesh, Vec3};
use great_core::sparse::{dense_eigen_oracle, smallest_eigenpairs, EigenOptions, SparseSymMatrix};
use great_core::spectral::{cotan_laplacian, hks, log_time_samples, pointcloud_laplacian};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn coefficient_of_variation(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// exp(A) by scaling and squaring with a Taylor core.
fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * a.nrows() as f64;
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let b = a / 2f64.powi(s);
    let n = a.nrows();
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

fn random_graph_laplacian(n: usize, seed: u64) -> SparseSymMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::new();
    let edge = |a: usize, b: usize, w: f64, t: &mut Vec<(usize, usize, f64)>| {
        t.extend([(a, b, -w), (b, a, -w), (a, a, w), (b, b, w)]);
    };
    for i in 1..n {
        let j = rng.random_range(0..i);
        let w = rng.random_range(0.1..2.0);
        edge(i, j, w, &mut t);
    }
    for _ in 0..n {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            let w = rng.random_range(0.1..2.0);
            edge(a, b, w, &mut t);
        }
    }
    SparseSymMatrix::from_triplets(n, &t).unwrap()
}

#[test]
fn icosphere_first_cluster_is_two() {
    let lp = cotan_laplacian(&icosphere(4)).unwrap();
    let e = smallest_eigenpairs(&lp.stiffness, &lp.mass, 4, &EigenOptions::default()).unwrap();
    assert!(e.values[0].abs() < 1e-8);
    for &v in &e.values[1..4] {
        assert!((v - 2.0).abs() / 2.0 < 0.02, "{v}");
    }
}

#[test]
fn full_spectrum_hks_matches_matrix_exponential() {
    for (n, seed) in [(30, 1), (120, 2), (200, 3)] {
        let l = random_graph_laplacian(n, seed);
        let pairs = dense_eigen_oracle(&l, &vec![1.0; n]).unwrap();
        let times = [0.05, 0.5, 2.0];
        let h = hks(&pairs, &times).unwrap();
        let ld = DMatrix::from_row_slice(n, n, &l.to_dense());
        for (j, &t) in times.iter().enumerate() {
            let e = expm(&(&ld * -t));
            for i in 0..n {
                assert!((h.get(i, j) - e[(i, i)]).abs() < 1e-8, "n={n} t={t}");
            }
        }
    }
}

#[test]
fn truncation_bound() {
    let n = 60;
    let l = random_graph_laplacian(n, 9);
    let full = dense_eigen_oracle(&l, &vec![1.0; n]).unwrap();
    let times = log_time_samples(0.01, 1.0, 6).unwrap();
    let hf = hks(&full, &times).unwrap();
    for kp in [5, 20, 40] {
        let ht = hks(&full.truncated(kp), &times).unwrap();
        for (j, &t) in times.iter().enumerate() {
            let bound = (n - kp) as f64 * (-full.values[kp] * t).exp();
            for i in 0..n {
                let d = hf.get(i, j) - ht.get(i, j);
                assert!(d >= -1e-12 && d <= bound + 1e-12);
            }
        }
    }
}

#[test]
fn icosphere_hks_is_homogeneous() {
    let lp = cotan_laplacian(&icosphere(4)).unwrap();
    let e = smallest_eigenpairs(&lp.stiffness, &lp.mass, 64, &EigenOptions::default()).unwrap();
    let h = hks(&e, &log_time_samples(1e-2, 1.0, 16).unwrap()).unwrap();
    for j in 0..16 {
        let cv = coefficient_of_variation(&h.column(j));
        assert!(cv < 0.02, "t index {j}: cv {cv}");
    }
}

#[test]
fn sphere_point_cloud_hks_is_homogeneous() {
    let pts = fibonacci_sphere(2000);
    let lp = pointcloud_laplacian(&pts, 12).unwrap();
    let e = smallest_eigenpairs(&lp.stiffness, &lp.mass, 64, &EigenOptions::default()).unwrap();
    let h = hks(&e, &log_time_samples(1e-2, 1.0, 16).unwrap()).unwrap();
    for j in 0..16 {
        let cv = coefficient_of_variation(&h.column(j));
        assert!(cv < 0.05, "t index {j}: cv {cv}");
    }
}

fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    let (sa, ca, sb, cb, sc, cc) = (a.sin(), a.cos(), b.sin(), b.cos(), c.sin(), c.cos());
    [
        [ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc],
        [sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc],
        [-sb, cb * sc, cb * cc],
    ]
}

fn apply(r: &[[f64; 3]; 3], p: Vec3, c: Vec3) -> Vec3 {
    Vec3::new(
        r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z,
        r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z,
        r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z,
    ) + c
}

fn bumpy_cloud(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fibonacci_sphere(n)
        .into_iter()
        .map(|p| p * (1.0 + 0.3 * p.x * p.y + 0.05 * rng.random::<f64>()))
        .map(|p| Vec3::new(p.x * 1.5, p.y, p.z))
        .collect()
}

fn cloud_hks(pts: &[Vec3]) -> great_core::spectral::HksField {
    let lp = pointcloud_laplacian(pts, 12).unwrap();
    let e = smallest_eigenpairs(&lp.stiffness, &lp.mass, 24, &EigenOptions::default()).unwrap();
    hks(&e, &log_time_samples(1e-2, 1.0, 8).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn hks_rigid_motion_invariant(a in 0.0..6.3f64, b in 0.0..6.3f64, c in 0.0..6.3f64, seed in 0u64..100) {
        let pts = bumpy_cloud(300, seed);
        let r = rotation(a, b, c);
        let moved: Vec<Vec3> = pts.iter().map(|&p| apply(&r, p, Vec3::new(3.0, -1.0, 2.0))).collect();
        let (h0, h1) = (cloud_hks(&pts), cloud_hks(&moved));
        for (x, y) in h0.values.iter().zip(&h1.values) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn hks_permutation_equivariant(seed in 0u64..100) {
        let pts = bumpy_cloud(250, seed);
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 77);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
        let (h0, h1) = (cloud_hks(&pts), cloud_hks(&permuted));
        for (new, &old) in perm.iter().enumerate() {
            for (x, y) in h1.row(new).iter().zip(h0.row(old)) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn raw_hks_positive_and_tends_to_kernel() {
    let m = icosphere(2);
    let pos = m.positions.iter().map(|&p| Vec3::new(2.0 * p.x, p.y, p.z)).collect();
    let mesh = TriangleMesh::new(pos, m.faces.clone()).unwrap();
    let lp = cotan_laplacian(&mesh).unwrap();
    let e = smallest_eigenpairs(&lp.stiffness, &lp.mass, 40, &EigenOptions::default()).unwrap();
    let h = hks(&e, &[0.01, 1.0, 1e3]).unwrap();
    assert!(h.values.iter().all(|&v| v > 0.0));
    let total_area: f64 = lp.mass.iter().sum();
    for i in 0..h.n {
        assert!((h.get(i, 2) - 1.0 / total_area).abs() < 1e-8);
    }
}
