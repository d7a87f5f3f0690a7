use nalgebra::{DMatrix, SymmetricEigen};

use super::eigen::{canonical_sign, clamp_eigenvalue};
use super::{EigenPairs, LinalgError, SparseSymMatrix};

pub const DENSE_ORACLE_MAX_N: usize = 512;

/// Full generalized spectrum through a dense eigendecomposition of
/// `M^{-1/2} L M^{-1/2}`. Reference implementation for small problems.
pub fn dense_eigen_oracle(l: &SparseSymMatrix, mass: &[f64]) -> Result<EigenPairs, LinalgError> {
    let n = l.dim();
    if n > DENSE_ORACLE_MAX_N {
        return Err(LinalgError::TooLarge { n, max: DENSE_ORACLE_MAX_N });
    }
    if mass.len() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, got: mass.len() });
    }
    if mass.iter().any(|&m| !(m > 0.0)) {
        return Err(LinalgError::InvalidArgument("mass entries must be positive".into()));
    }
    let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, v) in l.row(i) {
            a[(i, j)] = inv_sqrt[i] * v * inv_sqrt[j];
        }
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * n);
    for &o in &order {
        values.push(clamp_eigenvalue(eig.eigenvalues[o]));
        let mut v: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, o)] * inv_sqrt[i]).collect();
        canonical_sign(&mut v);
        vectors.extend_from_slice(&v);
    }
    Ok(EigenPairs {
        values,
        vectors,
        n,
        mass: mass.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_is_sorted() {
        let e = dense_eigen_oracle(&SparseSymMatrix::diagonal(&[3.0, 1.0, 2.0]), &[1.0; 3]).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn path_graph() {
        let l = SparseSymMatrix::from_dense(3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]).unwrap();
        let e = dense_eigen_oracle(&l, &[1.0; 3]).unwrap();
        for (v, x) in e.values.iter().zip([0.0, 1.0, 3.0]) {
            assert!((v - x).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix_has_orthonormal_basis() {
        let z = SparseSymMatrix::from_triplets(4, &[]).unwrap();
        let e = dense_eigen_oracle(&z, &[1.0; 4]).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
        for a in 0..4 {
            for b in 0..4 {
                let d: f64 = e.vector(a).iter().zip(e.vector(b)).map(|(x, y)| x * y).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_large() {
        let big = SparseSymMatrix::identity(DENSE_ORACLE_MAX_N + 1);
        assert!(matches!(
            dense_eigen_oracle(&big, &vec![1.0; DENSE_ORACLE_MAX_N + 1]),
            Err(LinalgError::TooLarge { .. })
        ));
    }
}
