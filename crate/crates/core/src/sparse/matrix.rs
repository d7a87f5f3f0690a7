use std::fmt::Write as _;
use std::path::Path;

use super::LinalgError;

/// Symmetric sparse matrix in compressed row storage. Both triangles are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymMatrix {
    /// Consolidates `(row, col, value)` triplets, summing duplicates. Both `(i, j)`
    /// and `(j, i)` must be supplied for off-diagonal entries.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, LinalgError> {
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(LinalgError::IndexOutOfRange { row: i, col: j, n });
            }
            if !v.is_finite() {
                return Err(LinalgError::NonFinite);
            }
            t.push((i, j, v));
        }
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let m = Self { n, row_ptr, cols, vals };
        m.check_symmetric()?;
        Ok(m)
    }

    fn check_symmetric(&self) -> Result<(), LinalgError> {
        let scale = self.vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let vt = self.get(j, i);
                if vt.is_none() && v != 0.0 {
                    return Err(LinalgError::NotSymmetric { row: i, col: j });
                }
                if (v - vt.unwrap_or(0.0)).abs() > 1e-12 * scale {
                    return Err(LinalgError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: d.to_vec(),
        }
    }

    /// From a dense row-major `n × n` array, keeping nonzeros.
    pub fn from_dense(n: usize, a: &[f64]) -> Result<Self, LinalgError> {
        if a.len() != n * n {
            return Err(LinalgError::DimensionMismatch { expected: n * n, got: a.len() });
        }
        let t: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| a[i * n + j] != 0.0)
            .map(|(i, j)| (i, j, a[i * n + j]))
            .collect();
        Self::from_triplets(n, &t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzeros of row `i` as `(col, value)`, sorted by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.vals[r.start + k])
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i).unwrap_or(0.0)).collect()
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.n {
            return Err(LinalgError::DimensionMismatch { expected: self.n, got: x.len() });
        }
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` without dimension checks beyond debug assertions.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    /// `a·self + b·diag(d)`.
    pub fn plus_diagonal(&self, a: f64, b: f64, d: &[f64]) -> Result<Self, LinalgError> {
        if d.len() != self.n {
            return Err(LinalgError::DimensionMismatch { expected: self.n, got: d.len() });
        }
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            t.extend(self.row(i).map(|(j, v)| (i, j, a * v)));
            t.push((i, i, b * d[i]));
        }
        Self::from_triplets(self.n, &t)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.vals.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[i * self.n + j] = v;
            }
        }
        d
    }

    /// Matrix Market coordinate text (`symmetric`, lower triangle, 1-based).
    pub fn to_matrix_market(&self) -> String {
        let lower: Vec<(usize, usize, f64)> = (0..self.n)
            .flat_map(|i| self.row(i).filter(move |&(j, _)| j <= i).map(move |(j, v)| (i, j, v)))
            .collect();
        let mut s = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
        writeln!(s, "{} {} {}", self.n, self.n, lower.len()).unwrap();
        for (i, j, v) in lower {
            writeln!(s, "{} {} {:e}", i + 1, j + 1, v).unwrap();
        }
        s
    }

    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<(), LinalgError> {
        std::fs::write(path, self.to_matrix_market())?;
        Ok(())
    }
}
