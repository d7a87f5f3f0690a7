//! Envelope (profile) Cholesky factorization under reverse Cuthill–McKee ordering.

use std::collections::VecDeque;

use super::{LinalgError, SparseSymMatrix};

/// Reverse Cuthill–McKee ordering; `perm[new] = old`.
pub fn rcm_ordering(a: &SparseSymMatrix) -> Vec<usize> {
    let n = a.dim();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_levels = |start: usize, visited: &[bool]| -> (usize, usize) {
        // returns (eccentricity, last vertex of the deepest level with min degree)
        let mut dist = vec![usize::MAX; n];
        let mut q = VecDeque::from([start]);
        dist[start] = 0;
        let mut far = start;
        while let Some(v) = q.pop_front() {
            for &w in &adj[v] {
                if dist[w] == usize::MAX && !visited[w] {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                    if dist[w] > dist[far] || (dist[w] == dist[far] && degree[w] < degree[far]) {
                        far = w;
                    }
                }
            }
        }
        (dist[far], far)
    };
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start vertex
        let mut start = seed;
        let (mut ecc, mut far) = bfs_levels(start, &visited);
        for _ in 0..8 {
            let (e2, f2) = bfs_levels(far, &visited);
            if e2 <= ecc {
                break;
            }
            start = far;
            ecc = e2;
            far = f2;
        }
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// `P A Pᵀ = L Lᵀ` with `L` stored row-wise over each row's envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SparseSymMatrix) -> Result<Self, LinalgError> {
        let n = a.dim();
        let perm = rcm_ordering(a);
        let mut inv_perm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in a.row(old) {
                first[new] = first[new].min(inv_perm[j]);
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in a.row(old) {
                let jn = inv_perm[j];
                if jn <= new {
                    data[start[new] + jn - first[new]] += v;
                }
            }
        }
        let scale = a.diag().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let ri = start[i] - fi;
                let rj = start[j] - fj;
                let mut s = data[ri + j];
                for k in lo..j {
                    s -= data[ri + k] * data[rj + k];
                }
                if j < i {
                    data[ri + j] = s / data[rj + j];
                } else {
                    if !(s > 1e-14 * scale) {
                        return Err(LinalgError::SingularSystem);
                    }
                    data[ri + i] = s.sqrt();
                }
            }
        }
        Ok(Self { n, perm, inv_perm, first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        self.solve_permuted_in_place(&mut y);
        let mut x = vec![0.0; self.n];
        for (old, &new) in self.inv_perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }

    fn solve_permuted_in_place(&self, y: &mut [f64]) {
        let n = self.n;
        // forward: L z = y
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.start[i] - fi;
            let mut s = y[i];
            for k in fi..i {
                s -= self.data[ri + k] * y[k];
            }
            y[i] = s / self.data[ri + i];
        }
        // backward: Lᵀ x = z, column-oriented over rows of L
        for i in (0..n).rev() {
            let fi = self.first[i];
            let ri = self.start[i] - fi;
            y[i] /= self.data[ri + i];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.data[ri + k] * yi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::primitives::flat_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_2x2() {
        let a = SparseSymMatrix::from_dense(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let x = EnvelopeCholesky::factor(&a).unwrap().solve(&[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = SparseSymMatrix::from_dense(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(EnvelopeCholesky::factor(&a), Err(LinalgError::SingularSystem)));
    }

    #[test]
    fn grid_laplacian_plus_identity() {
        let m = flat_grid(20, 20, 1.0, 1.0);
        let n = m.vertex_count();
        let mut t = Vec::new();
        for (a, b) in m.edges() {
            t.extend([(a, b, -1.0), (b, a, -1.0), (a, a, 1.0), (b, b, 1.0)]);
        }
        for i in 0..n {
            t.push((i, i, 0.5));
        }
        let a = SparseSymMatrix::from_triplets(n, &t).unwrap();
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        // RCM keeps the profile within a few grid rows per vertex
        assert!(chol.envelope_size() < 2 * 20 * n);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = chol.solve(&b).unwrap();
        let r = a.spmv(&x).unwrap();
        let err = r.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn rcm_is_a_permutation_with_disconnected_parts() {
        let a = SparseSymMatrix::diagonal(&[1.0, 2.0, 3.0, 4.0]);
        let mut p = rcm_ordering(&a);
        p.sort_unstable();
        assert_eq!(p, vec![0, 1, 2, 3]);
    }
}
