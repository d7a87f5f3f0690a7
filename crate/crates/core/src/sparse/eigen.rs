//! Smallest generalized eigenpairs of `L w = λ M w` for symmetric PSD `L` and
//! positive diagonal `M`.
//!
//! The solver runs a block Krylov iteration on the shift-inverted operator
//! `(L + s M)⁻¹ M`, which is self-adjoint in the `M` inner product and maps the
//! smallest `λ` to the largest `θ = 1 / (λ + s)`. Each cycle performs a full
//! Rayleigh–Ritz projection; restarts keep the leading Ritz vectors and continue
//! from their residual directions (thick restart). Blocks of random start
//! vectors resolve degenerate clusters.

use matrixmultiply::dgemm;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvelopeCholesky, LinalgError, SparseSymMatrix};

/// Eigenvalues ascending with `M`-orthonormal eigenvectors stored column-major.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// `n × k`, column `j` at `vectors[j*n..(j+1)*n]`.
    pub vectors: Vec<f64>,
    pub n: usize,
    pub mass: Vec<f64>,
}

impl EigenPairs {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }

    /// Keeps the `k` smallest pairs.
    pub fn truncated(&self, k: usize) -> EigenPairs {
        let k = k.min(self.k());
        EigenPairs {
            values: self.values[..k].to_vec(),
            vectors: self.vectors[..k * self.n].to_vec(),
            n: self.n,
            mass: self.mass.clone(),
        }
    }

    /// Largest `‖L w − λ M w‖₂` over all pairs.
    pub fn max_residual(&self, l: &SparseSymMatrix) -> f64 {
        (0..self.k())
            .map(|j| {
                let w = self.vector(j);
                let lw = l.spmv(w).expect("dimension");
                lw.iter()
                    .zip(w)
                    .zip(&self.mass)
                    .map(|((a, b), m)| (a - self.values[j] * m * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Converged when `‖L y − λ M y‖₂ ≤ tol · ‖L‖∞ · max(1, ‖y‖₂)`.
    pub tol: f64,
    pub block_size: usize,
    /// Krylov basis size; defaults to `max(2k, k + 2b) + b`, capped at `n`.
    pub basis_size: Option<usize>,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            block_size: 8,
            basis_size: None,
            max_restarts: 60,
            seed: 0x5eed,
        }
    }
}

/// Values in `[-1e-8, 0)` are round-off on a PSD operator and reported as zero.
pub(crate) fn clamp_eigenvalue(v: f64) -> f64 {
    if (-1e-8..0.0).contains(&v) {
        0.0
    } else {
        v
    }
}

/// Flips the sign so that the entry of largest magnitude is positive.
pub(crate) fn canonical_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best * (1.0 + 1e-9) {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn m_dot(a: &[f64], b: &[f64], m: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * m[i] * b[i];
    }
    s
}

/// Row-major product `C (r × c) = A (r × inner) · B (inner × c)` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    r: usize,
    inner: usize,
    c: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    out: &mut [f64],
) {
    unsafe {
        dgemm(
            r,
            inner,
            c,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            c as isize,
            1,
        );
    }
}

struct Basis<'a> {
    n: usize,
    mass: &'a [f64],
    /// basis vectors, one per row (row-major `count × n`)
    v: Vec<f64>,
    /// operator images of the basis vectors
    w: Vec<f64>,
    count: usize,
}

impl Basis<'_> {
    fn col(&self, j: usize) -> &[f64] {
        &self.v[j * self.n..(j + 1) * self.n]
    }

    /// M-orthonormalizes `x` against the basis (two passes). Returns `None` when
    /// `x` is numerically inside the span.
    fn orthonormalize(&self, mut x: Vec<f64>) -> Option<Vec<f64>> {
        let norm0 = m_dot(&x, &x, self.mass).sqrt();
        if !(norm0 > 0.0) || !norm0.is_finite() {
            return None;
        }
        for _ in 0..2 {
            for j in 0..self.count {
                let vj = self.col(j);
                let c = m_dot(vj, &x, self.mass);
                for i in 0..self.n {
                    x[i] -= c * vj[i];
                }
            }
        }
        let norm = m_dot(&x, &x, self.mass).sqrt();
        if norm < 1e-8 * norm0 {
            return None;
        }
        x.iter_mut().for_each(|e| *e /= norm);
        Some(x)
    }

    fn push(&mut self, v: Vec<f64>, w: Vec<f64>) {
        self.v.extend_from_slice(&v);
        self.w.extend_from_slice(&w);
        self.count += 1;
    }
}

/// The `k` algebraically smallest eigenpairs of `L w = λ M w`.
pub fn smallest_eigenpairs(
    l: &SparseSymMatrix,
    mass: &[f64],
    k: usize,
    opts: &EigenOptions,
) -> Result<EigenPairs, LinalgError> {
    let n = l.dim();
    if mass.len() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, got: mass.len() });
    }
    if k == 0 || k > n {
        return Err(LinalgError::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
    }
    if mass.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(LinalgError::InvalidArgument("mass entries must be positive".into()));
    }
    let diag = l.diag();
    let max_ratio = diag.iter().zip(mass).map(|(d, m)| d / m).fold(0.0f64, f64::max);
    let shift = if max_ratio > 0.0 { 1e-6 * max_ratio } else { 1.0 };
    let shifted = l.plus_diagonal(1.0, shift, mass)?;
    let chol = EnvelopeCholesky::factor(&shifted)?;
    let apply_op = |v: &[f64]| -> Vec<f64> {
        let mv: Vec<f64> = v.iter().zip(mass).map(|(a, m)| a * m).collect();
        chol.solve(&mv).expect("dimension")
    };

    let b = opts.block_size.clamp(1, n);
    let m = opts
        .basis_size
        .unwrap_or_else(|| (2 * k).max(k + 2 * b) + b)
        .clamp(k.min(n), n);
    let keep = (k + b).min(m.saturating_sub(b)).max(k.min(m));
    let l_norm = l.norm_inf().max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };

    let mut basis = Basis {
        n,
        mass,
        v: Vec::with_capacity(n * m),
        w: Vec::with_capacity(n * m),
        count: 0,
    };
    let mut pending: Vec<Vec<f64>> = (0..b).map(|_| random_vec(&mut rng)).collect();
    let mut converged_count = 0;

    for _cycle in 0..=opts.max_restarts {
        // expand the block Krylov basis
        let mut stalls = 0;
        while basis.count < m {
            let mut produced = Vec::new();
            for x in pending.drain(..) {
                if basis.count >= m {
                    break;
                }
                if let Some(v) = basis.orthonormalize(x) {
                    let w = apply_op(&v);
                    produced.push(w.clone());
                    basis.push(v, w);
                }
            }
            if produced.len() < b {
                stalls += 1;
                if stalls > 4 * n + 8 {
                    return Err(LinalgError::NotConverged { converged: converged_count, requested: k });
                }
            }
            pending = produced;
            while pending.len() < b {
                pending.push(random_vec(&mut rng));
            }
        }

        // Rayleigh–Ritz: H = Vᵀ M W
        let cnt = basis.count;
        let vm: Vec<f64> = basis
            .v
            .chunks_exact(n)
            .flat_map(|row| row.iter().zip(mass).map(|(a, mm)| a * mm))
            .collect();
        let mut h = vec![0.0; cnt * cnt];
        gemm(cnt, n, cnt, &vm, n as isize, 1, &basis.w, 1, n as isize, &mut h);
        let hm = DMatrix::from_fn(cnt, cnt, |i, j| 0.5 * (h[i * cnt + j] + h[j * cnt + i]));
        let eig = SymmetricEigen::new(hm);
        let mut order: Vec<usize> = (0..cnt).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

        let take = keep.max(k).min(cnt);
        // Sᵀ as row-major (take × cnt)
        let mut st = vec![0.0; take * cnt];
        for (r, &o) in order.iter().take(take).enumerate() {
            for c in 0..cnt {
                st[r * cnt + c] = eig.eigenvectors[(c, o)];
            }
        }
        let mut y = vec![0.0; take * n];
        gemm(take, cnt, n, &st, cnt as isize, 1, &basis.v, n as isize, 1, &mut y);
        let mut wy = vec![0.0; take * n];
        gemm(take, cnt, n, &st, cnt as isize, 1, &basis.w, n as isize, 1, &mut wy);
        let thetas: Vec<f64> = order.iter().take(take).map(|&o| eig.eigenvalues[o]).collect();

        let mut lambdas = Vec::with_capacity(k);
        let mut unconverged = Vec::new();
        converged_count = 0;
        for j in 0..take {
            let yj = &y[j * n..(j + 1) * n];
            let theta = thetas[j];
            let lambda = if theta > 0.0 { 1.0 / theta - shift } else { f64::INFINITY };
            if j < k {
                let ly = l.spmv(yj)?;
                let res = ly
                    .iter()
                    .zip(yj)
                    .zip(mass)
                    .map(|((a, b), mm)| (a - lambda * mm * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let ynorm = yj.iter().map(|v| v * v).sum::<f64>().sqrt();
                if lambda.is_finite() && res <= opts.tol * l_norm * ynorm.max(1.0) {
                    converged_count += 1;
                } else {
                    unconverged.push(j);
                }
                lambdas.push(lambda);
            }
        }

        if unconverged.is_empty() {
            // Final Rayleigh–Ritz on the converged subspace with L itself; the
            // shift-inverted projection loses relative accuracy at large λ.
            let yk = &y[..k * n];
            let mut ly = vec![0.0; k * n];
            for j in 0..k {
                l.spmv_into(&yk[j * n..(j + 1) * n], &mut ly[j * n..(j + 1) * n]);
            }
            let mut g = vec![0.0; k * k];
            gemm(k, n, k, yk, n as isize, 1, &ly, 1, n as isize, &mut g);
            let gm = DMatrix::from_fn(k, k, |i, j| 0.5 * (g[i * k + j] + g[j * k + i]));
            let reig = SymmetricEigen::new(gm);
            let mut idx: Vec<usize> = (0..k).collect();
            idx.sort_by(|&a, &b| reig.eigenvalues[a].total_cmp(&reig.eigenvalues[b]));
            let mut qt = vec![0.0; k * k];
            for (r, &o) in idx.iter().enumerate() {
                for c in 0..k {
                    qt[r * k + c] = reig.eigenvectors[(c, o)];
                }
            }
            let mut vectors = vec![0.0; k * n];
            gemm(k, k, n, &qt, k as isize, 1, yk, n as isize, 1, &mut vectors);
            let mut values = Vec::with_capacity(k);
            for (r, &o) in idx.iter().enumerate() {
                values.push(clamp_eigenvalue(reig.eigenvalues[o]));
                let v = &mut vectors[r * n..(r + 1) * n];
                let nrm = m_dot(v, v, mass).sqrt();
                v.iter_mut().for_each(|e| *e /= nrm);
                canonical_sign(v);
            }
            return Ok(EigenPairs {
                values,
                vectors,
                n,
                mass: mass.to_vec(),
            });
        }
        if cnt == n {
            // full space already spanned; nothing left to gain
            break;
        }

        // thick restart: keep leading Ritz vectors, continue from their residuals
        let kept = keep.min(take);
        pending = unconverged
            .iter()
            .copied()
            .chain(0..kept)
            .take(b)
            .map(|j| {
                (0..n)
                    .map(|i| wy[j * n + i] - thetas[j] * y[j * n + i])
                    .collect::<Vec<f64>>()
            })
            .collect();
        basis.v = y[..kept * n].to_vec();
        basis.w = wy[..kept * n].to_vec();
        basis.count = kept;
    }
    Err(LinalgError::NotConverged {
        converged: converged_count,
        requested: k,
    })
}
