use super::{LinalgError, SparseSymMatrix};

#[derive(Debug, Clone)]
pub struct CgOptions {
    /// Target relative residual `‖Ax − b‖ / ‖b‖`.
    pub tol: f64,
    /// Defaults to `10·n` when `None`.
    pub max_iter: Option<usize>,
    /// Treat the constant vector as the kernel of a PSD matrix: project it out of
    /// the right-hand side and iterates.
    pub project_constant: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            project_constant: false,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
pub fn solve_spd(a: &SparseSymMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>, LinalgError> {
    solve_spd_with(
        a,
        b,
        &CgOptions {
            tol,
            ..CgOptions::default()
        },
    )
}

pub fn solve_spd_with(a: &SparseSymMatrix, b: &[f64], opts: &CgOptions) -> Result<Vec<f64>, LinalgError> {
    let n = a.dim();
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, got: b.len() });
    }
    let mut rhs = b.to_vec();
    if opts.project_constant {
        remove_mean(&mut rhs);
    }
    let bnorm = dot(&rhs, &rhs).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let diag = a.diag();
    if diag.iter().any(|&d| d <= 0.0) && !opts.project_constant {
        return Err(LinalgError::SingularSystem);
    }
    let inv_d: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_d).map(|(r, d)| r * d).collect();
    if opts.project_constant {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(10));
    for _ in 0..max_iter {
        a.spmv_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(LinalgError::SingularSystem);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= opts.tol * bnorm {
            if opts.project_constant {
                remove_mean(&mut x);
            }
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_d[i];
        }
        if opts.project_constant {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinalgError::NotConverged {
        converged: 0,
        requested: 1,
    })
}
