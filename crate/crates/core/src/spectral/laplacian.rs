use serde::{Deserialize, Serialize};

use super::SpectralError;
use crate::geom::{knn, TriangleMesh, Vec3};
use crate::sparse::SparseSymMatrix;

pub const DEFAULT_K_NEIGHBORS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LaplacianKind {
    Cotangent,
    KnnGaussian { k_neighbors: usize, sigma: f64 },
}

/// Stiffness `L` (PSD, constants in its kernel) with a positive diagonal mass `M`.
#[derive(Debug, Clone)]
pub struct LaplacianPair {
    pub stiffness: SparseSymMatrix,
    pub mass: Vec<f64>,
    pub kind: LaplacianKind,
    /// Connected components of the underlying graph.
    pub components: usize,
}

impl LaplacianPair {
    pub fn check_connected(&self) -> Result<(), SpectralError> {
        if self.components > 1 {
            Err(SpectralError::DisconnectedGraph {
                components: self.components,
            })
        } else {
            Ok(())
        }
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }
}

fn count_components(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

/// Cotangent stiffness with barycentric lumped mass (one third of incident face areas).
///
/// Off-diagonal `L_ij = -½(cot α_ij + cot β_ij)`, diagonal the negated row sum.
pub fn cotan_laplacian(mesh: &TriangleMesh) -> Result<LaplacianPair, SpectralError> {
    let n = mesh.vertex_count();
    let mut mass = vec![0.0; n];
    let mut triplets = Vec::with_capacity(mesh.faces.len() * 12);
    for (f, face) in mesh.faces.iter().enumerate() {
        let p = mesh.face_positions(f);
        let double_area = (p[1] - p[0]).cross(p[2] - p[0]).norm();
        let area = 0.5 * double_area;
        if !(area >= 1e-14) {
            return Err(SpectralError::DegenerateFace { face: f, area });
        }
        for k in 0..3 {
            mass[face[k]] += area / 3.0;
            // angle at corner k is opposite edge (k+1, k+2)
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            let u = p[i] - p[k];
            let v = p[j] - p[k];
            let cot = u.dot(v) / double_area;
            let w = 0.5 * cot;
            let (a, b) = (face[i], face[j]);
            triplets.extend([(a, b, -w), (b, a, -w), (a, a, w), (b, b, w)]);
        }
    }
    if let Some(i) = mass.iter().position(|&m| m <= 0.0) {
        return Err(SpectralError::Geom(crate::geom::GeomError::ZeroNormal {
            count: mass.iter().filter(|&&m| m <= 0.0).count(),
            first: vec![i],
        }));
    }
    let stiffness = SparseSymMatrix::from_triplets(n, &triplets)?;
    Ok(LaplacianPair {
        stiffness,
        mass,
        kind: LaplacianKind::Cotangent,
        components: mesh.component_count(),
    })
}

/// Symmetrized k-NN graph Laplacian with Gaussian weights
/// `w_ij = exp(-‖x_i − x_j‖² / 2σ²)`, where `σ` is the mean distance to the
/// `k_neighbors`-th neighbor. `L = D − W` and `M = c · I` with
/// `c = Σ_ij w_ij ‖x_i − x_j‖² / 4n`, the kernel's second moment. For
/// `f = ‖x − x_i‖²` on a flat patch `(L f)_i = −Σ_j w_ij d_ij²` while `Δf = 4`,
/// so this `c` makes `M⁻¹L` approximate the Laplace–Beltrami operator in the
/// units of the input (eigenvalues ~ 1/length²).
///
/// A disconnected graph is logged and recorded in [`LaplacianPair::components`].
pub fn pointcloud_laplacian(points: &[Vec3], k_neighbors: usize) -> Result<LaplacianPair, SpectralError> {
    let n = points.len();
    if k_neighbors < 4 || n <= k_neighbors {
        return Err(SpectralError::BadNeighborCount { n, k: k_neighbors });
    }
    let nbrs = knn(points, points, k_neighbors + 1)?;
    // drop the query point itself (it may not be first when duplicates exist)
    let lists: Vec<Vec<(usize, f64)>> = nbrs
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            nb.indices
                .iter()
                .zip(&nb.distances)
                .filter(|(&j, _)| j != i)
                .take(k_neighbors)
                .map(|(&j, &d)| (j, d))
                .collect()
        })
        .collect();
    let sigma = lists.iter().map(|l| l.last().map_or(0.0, |x| x.1)).sum::<f64>() / n as f64;
    if !(sigma > 0.0) {
        return Err(SpectralError::Geom(crate::geom::GeomError::DegenerateScale(sigma)));
    }
    let mut edges: Vec<(usize, usize)> = lists
        .iter()
        .enumerate()
        .flat_map(|(i, l)| l.iter().map(move |&(j, _)| (i.min(j), i.max(j))))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    let two_sigma_sq = 2.0 * sigma * sigma;
    let mut triplets = Vec::with_capacity(edges.len() * 4);
    let mut moment = 0.0;
    for &(a, b) in &edges {
        let d2 = points[a].distance_squared(points[b]);
        let w = (-d2 / two_sigma_sq).exp();
        moment += 2.0 * w * d2;
        triplets.extend([(a, b, -w), (b, a, -w), (a, a, w), (b, b, w)]);
    }
    let components = count_components(n, edges.iter().copied());
    if components > 1 {
        log::warn!("k-NN graph is disconnected ({components} components); expect {components} zero eigenvalues");
    }
    Ok(LaplacianPair {
        stiffness: SparseSymMatrix::from_triplets(n, &triplets)?,
        mass: vec![moment / (4.0 * n as f64); n],
        kind: LaplacianKind::KnnGaussian { k_neighbors, sigma },
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::primitives::{flat_grid, fibonacci_sphere};
    use crate::sparse::{smallest_eigenpairs, EigenOptions};

    #[test]
    fn square_from_two_equilateral_triangles() {
        // rhombus made of two equilateral triangles sharing edge (0, 1)
        let h = 3f64.sqrt() / 2.0;
        let pos = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.5, h, 0.0),
            Vec3::new(0.5, -h, 0.0),
        ];
        let mesh = TriangleMesh::new(pos, vec![[0, 1, 2], [1, 0, 3]]).unwrap();
        let lp = cotan_laplacian(&mesh).unwrap();
        let c = 0.5 / 3f64.sqrt(); // ½ cot 60°
        #[rustfmt::skip]
        let expected = [
            4.0 * c, -2.0 * c, -c, -c,
            -2.0 * c, 4.0 * c, -c, -c,
            -c, -c, 2.0 * c, 0.0,
            -c, -c, 0.0, 2.0 * c,
        ];
        for (a, e) in lp.stiffness.to_dense().iter().zip(expected) {
            assert!((a - e).abs() < 1e-14, "{a} vs {e}");
        }
        let tri_area = 3f64.sqrt() / 4.0;
        let expect_mass = [2.0 * tri_area / 3.0, 2.0 * tri_area / 3.0, tri_area / 3.0, tri_area / 3.0];
        for (m, e) in lp.mass.iter().zip(expect_mass) {
            assert!((m - e).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_grid_kernel_is_constant() {
        let lp = cotan_laplacian(&flat_grid(8, 8, 1.0, 1.0)).unwrap();
        assert!(lp.stiffness.row_sums().iter().all(|s| s.abs() < 1e-12));
        let e = smallest_eigenpairs(&lp.stiffness, &lp.mass, 2, &EigenOptions::default()).unwrap();
        assert!(e.values[0].abs() < 1e-10 && e.values[1] > 1e-3);
        let v0 = e.vector(0);
        assert!(v0.iter().all(|x| (x - v0[0]).abs() < 1e-8));
    }

    #[test]
    fn degenerate_face() {
        let pos = vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        let m = TriangleMesh::new(pos, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(cotan_laplacian(&m), Err(SpectralError::DegenerateFace { face: 0, .. })));
    }

    #[test]
    fn knn_rows_sum_to_zero_and_mass_is_uniform() {
        let pts = fibonacci_sphere(300);
        let lp = pointcloud_laplacian(&pts, 12).unwrap();
        assert!(lp.stiffness.row_sums().iter().all(|s| s.abs() < 1e-9));
        assert!(lp.mass.iter().all(|&m| m == lp.mass[0] && m > 0.0));
        assert_eq!(lp.components, 1);
        assert!(lp.check_connected().is_ok());
    }

    #[test]
    fn knn_spectrum_is_in_laplace_beltrami_units() {
        // unit sphere: first nonzero eigenvalue l(l+1) = 2 with multiplicity 3
        let lp = pointcloud_laplacian(&fibonacci_sphere(2000), 12).unwrap();
        let e = smallest_eigenpairs(&lp.stiffness, &lp.mass, 4, &EigenOptions::default()).unwrap();
        for &v in &e.values[1..4] {
            assert!((v - 2.0).abs() < 0.2, "{:?}", e.values);
        }
        // scaling the cloud by s scales eigenvalues by 1/s²
        let big: Vec<Vec3> = fibonacci_sphere(2000).into_iter().map(|p| p * 3.0).collect();
        let lb = pointcloud_laplacian(&big, 12).unwrap();
        let eb = smallest_eigenpairs(&lb.stiffness, &lb.mass, 4, &EigenOptions::default()).unwrap();
        assert!((eb.values[1] * 9.0 - e.values[1]).abs() < 1e-8 * e.values[1]);
    }

    #[test]
    fn two_far_clusters_are_disconnected() {
        let mut pts = fibonacci_sphere(40);
        pts.extend(fibonacci_sphere(40).into_iter().map(|p| p + Vec3::new(100.0, 0.0, 0.0)));
        let lp = pointcloud_laplacian(&pts, 4).unwrap();
        assert!(matches!(lp.check_connected(), Err(SpectralError::DisconnectedGraph { components: 2 })));
        let e = smallest_eigenpairs(&lp.stiffness, &lp.mass, 3, &EigenOptions::default()).unwrap();
        assert!(e.values[0] < 1e-8 && e.values[1] < 1e-8 && e.values[2] > 1e-6);
    }

    #[test]
    fn neighbor_count_bounds() {
        let pts = fibonacci_sphere(10);
        assert!(pointcloud_laplacian(&pts, 3).is_err());
        assert!(pointcloud_laplacian(&pts, 10).is_err());
    }
}
