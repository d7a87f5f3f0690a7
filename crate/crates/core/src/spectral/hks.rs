use serde::{Deserialize, Serialize};

use super::{cotan_laplacian, pointcloud_laplacian, LaplacianPair, SpectralError, DEFAULT_K_NEIGHBORS};
use crate::geom::{Shape, Vec3};
use crate::sparse::{smallest_eigenpairs, EigenOptions, EigenPairs};

/// Per-point heat kernel signature, `n × T` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HksField {
    pub values: Vec<f64>,
    pub n: usize,
    pub times: Vec<f64>,
    /// Number of eigenpairs in the truncated sum.
    pub k: usize,
}

impl HksField {
    pub fn t(&self) -> usize {
        self.times.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.times.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let t = self.times.len();
        &self.values[i * t..(i + 1) * t]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }
}

fn check_times(times: &[f64]) -> Result<(), SpectralError> {
    let ascending = times.windows(2).all(|w| w[0] < w[1]);
    if times.is_empty() || !ascending || !times.iter().all(|&t| t > 0.0 && t.is_finite()) {
        return Err(SpectralError::BadTimes);
    }
    Ok(())
}

/// `HKS_i(t) = Σ_j exp(−λ_j t) · w_j(i)²` over all supplied (M-orthonormal) pairs.
pub fn hks(pairs: &EigenPairs, times: &[f64]) -> Result<HksField, SpectralError> {
    check_times(times)?;
    let (n, k) = (pairs.n, pairs.k());
    if n == 0 || k == 0 {
        return Err(SpectralError::EmptyPairs);
    }
    let nt = times.len();
    let mut values = vec![0.0; n * nt];
    for j in 0..k {
        let decay: Vec<f64> = times.iter().map(|&t| (-pairs.values[j] * t).exp()).collect();
        for (i, &w) in pairs.vector(j).iter().enumerate() {
            let w2 = w * w;
            let row = &mut values[i * nt..(i + 1) * nt];
            for (v, d) in row.iter_mut().zip(&decay) {
                *v += d * w2;
            }
        }
    }
    Ok(HksField {
        values,
        n,
        times: times.to_vec(),
        k,
    })
}

/// Geometric progression from `t_min` to `t_max` inclusive.
pub fn log_time_samples(t_min: f64, t_max: f64, count: usize) -> Result<Vec<f64>, SpectralError> {
    if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) || count < 2 {
        return Err(SpectralError::BadRange { t_min, t_max, count });
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    let mut out: Vec<f64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect();
    out[0] = t_min;
    out[count - 1] = t_max;
    Ok(out)
}

/// Result of per-time standardization. Columns with std below 1e-12 are
/// centered with std 1 substituted (so become zeros) and listed by time.
#[derive(Debug, Clone)]
pub struct HksStandardization {
    pub field: HksField,
    pub constant_times: Vec<f64>,
}

impl HksStandardization {
    /// Fails with `ConstantColumn` for the first constant time, if any.
    pub fn strict(self) -> Result<HksField, SpectralError> {
        match self.constant_times.first() {
            Some(&t) => Err(SpectralError::ConstantColumn { t }),
            None => Ok(self.field),
        }
    }
}

/// Zero mean and unit population std per time column.
pub fn standardize_hks(field: &HksField) -> Result<HksStandardization, SpectralError> {
    let (n, nt) = (field.n, field.t());
    if n < 2 {
        return Err(SpectralError::TooFewPoints { need: 2, got: n });
    }
    let mut out = field.clone();
    let mut constant_times = Vec::new();
    for j in 0..nt {
        let col = field.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let mut std = var.sqrt();
        if std < 1e-12 {
            constant_times.push(field.times[j]);
            std = 1.0;
        }
        for (i, v) in col.iter().enumerate() {
            out.values[i * nt + j] = (v - mean) / std;
        }
    }
    Ok(HksStandardization { field: out, constant_times })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplacianChoice {
    Cotan,
    Knn,
}

impl std::str::FromStr for LaplacianChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cotan" => Ok(Self::Cotan),
            "knn" => Ok(Self::Knn),
            other => Err(format!("unknown laplacian '{other}' (expected cotan or knn)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HksOptions {
    pub k: usize,
    pub times: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub laplacian: LaplacianChoice,
    pub k_neighbors: usize,
    pub seed: u64,
}

impl Default for HksOptions {
    fn default() -> Self {
        Self {
            k: 128,
            times: 16,
            t_min: 1e-2,
            t_max: 1.0,
            laplacian: LaplacianChoice::Knn,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            seed: 0,
        }
    }
}

impl HksOptions {
    pub fn laplacian_for(&self, shape: &Shape, positions: &[Vec3]) -> Result<LaplacianPair, SpectralError> {
        match (self.laplacian, shape.as_mesh()) {
            (LaplacianChoice::Cotan, Some(mesh)) => {
                let mut m = mesh.clone();
                m.positions = positions.to_vec();
                cotan_laplacian(&m)
            }
            (LaplacianChoice::Cotan, None) => Err(SpectralError::Geom(crate::geom::GeomError::NoFaces)),
            (LaplacianChoice::Knn, _) => pointcloud_laplacian(positions, self.k_neighbors),
        }
    }
}

/// Raw HKS of a shape whose positions are used as given (callers standardize first).
/// `k` is capped at the vertex count.
pub fn shape_hks(shape: &Shape, opts: &HksOptions) -> Result<HksField, SpectralError> {
    let positions = shape.positions();
    let lp = opts.laplacian_for(shape, positions)?;
    if lp.components > 1 {
        log::warn!("shape has {} components", lp.components);
    }
    let times = log_time_samples(opts.t_min, opts.t_max, opts.times)?;
    let k = opts.k.min(positions.len());
    let eig = smallest_eigenpairs(
        &lp.stiffness,
        &lp.mass,
        k,
        &EigenOptions {
            seed: opts.seed,
            ..EigenOptions::default()
        },
    )?;
    hks(&eig, &times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{dense_eigen_oracle, SparseSymMatrix};

    fn path3_pairs() -> EigenPairs {
        let l = SparseSymMatrix::from_dense(3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]).unwrap();
        dense_eigen_oracle(&l, &[1.0; 3]).unwrap()
    }

    #[test]
    fn path_graph_closed_form() {
        let times = [0.01, 0.3, 1.0, 4.0];
        let h = hks(&path3_pairs(), &times).unwrap();
        for (j, &t) in times.iter().enumerate() {
            let h1 = 1.0 / 3.0 + (-t).exp() / 2.0 + (-3.0 * t).exp() / 6.0;
            let h2 = 1.0 / 3.0 + 2.0 * (-3.0 * t).exp() / 3.0;
            assert!((h.get(0, j) - h1).abs() < 1e-12);
            assert!((h.get(1, j) - h2).abs() < 1e-12);
            assert!((h.get(2, j) - h1).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_mode_only() {
        let n = 5;
        let pairs = EigenPairs {
            values: vec![0.0],
            vectors: vec![1.0 / (n as f64).sqrt(); n],
            n,
            mass: vec![1.0; n],
        };
        let h = hks(&pairs, &[0.1, 10.0]).unwrap();
        assert!(h.values.iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn time_samples() {
        let t = log_time_samples(1e-2, 1.0, 16).unwrap();
        assert_eq!((t[0], t[15]), (1e-2, 1.0));
        let ratio = 10f64.powf(2.0 / 15.0);
        assert!(t.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-12));
        let t = log_time_samples(1.0, 100.0, 3).unwrap();
        assert!((t[1] - 10.0).abs() < 1e-12);
        assert!(matches!(log_time_samples(1.0, 1.0, 2), Err(SpectralError::BadRange { .. })));
        assert!(log_time_samples(0.0, 1.0, 4).is_err());
        assert!(log_time_samples(0.1, 1.0, 1).is_err());
    }

    fn column_field(col: &[f64]) -> HksField {
        HksField {
            values: col.to_vec(),
            n: col.len(),
            times: vec![1.0],
            k: 1,
        }
    }

    #[test]
    fn standardize_column() {
        let s = standardize_hks(&column_field(&[1.0, 2.0, 3.0])).unwrap().strict().unwrap();
        let e = 1.5f64.sqrt();
        for (a, b) in s.values.iter().zip([-e, 0.0, e]) {
            assert!((a - b).abs() < 1e-12);
        }
        let again = standardize_hks(&s).unwrap().strict().unwrap();
        for (a, b) in again.values.iter().zip(&s.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_column_reports_and_zeroes() {
        let s = standardize_hks(&column_field(&[4.0, 4.0, 4.0])).unwrap();
        assert_eq!(s.constant_times, vec![1.0]);
        assert!(s.field.values.iter().all(|&v| v == 0.0));
        assert!(matches!(s.strict(), Err(SpectralError::ConstantColumn { t }) if t == 1.0));
    }

    #[test]
    fn bad_times() {
        assert!(matches!(hks(&path3_pairs(), &[1.0, 0.5]), Err(SpectralError::BadTimes)));
        assert!(matches!(hks(&path3_pairs(), &[-1.0]), Err(SpectralError::BadTimes)));
    }
}
