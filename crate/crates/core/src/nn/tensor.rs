use super::{shape_err, NnError};

/// Dense row-major matrix. Row vectors (`1 × n`) double as bias vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != rows * cols {
            return Err(shape_err("from_vec", format!("{} values for {rows}x{cols}", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }
}

/// Strided view for [`gemm`]: base offset, row stride, column stride.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        Self { data, off: 0, rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn t(data: &'a [f64], cols: usize) -> Self {
        Self { data, off: 0, rs: 1, cs: cols }
    }

    /// Column block starting at `col0` of a row-major matrix.
    pub fn cols(data: &'a [f64], cols: usize, col0: usize) -> Self {
        Self { data, off: col0, rs: cols, cs: 1 }
    }

    pub fn cols_t(data: &'a [f64], cols: usize, col0: usize) -> Self {
        Self { data, off: col0, rs: 1, cs: cols }
    }
}

/// `C[m×n] = alpha · A[m×k] B[k×n] + beta · C` with C given by offset and row stride.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: View,
    b: View,
    beta: f64,
    c: &mut [f64],
    c_off: usize,
    c_rs: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let max_a = if k == 0 { 0 } else { a.off + (m - 1) * a.rs + (k - 1) * a.cs };
    let max_b = if k == 0 { 0 } else { b.off + (k - 1) * b.rs + (n - 1) * b.cs };
    let max_c = c_off + (m - 1) * c_rs + n - 1;
    assert!(k == 0 || (max_a < a.data.len() && max_b < b.data.len()));
    assert!(max_c < c.len());
    // SAFETY: every index touched is bounded by the asserts above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.off),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.off),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr().add(c_off),
            c_rs as isize,
            1,
        );
    }
}
