//! Small dense linear-algebra kernels on row-major `f64` slices.
//!
//! Matrix products go through `matrixmultiply::dgemm` (single-threaded,
//! hence bitwise reproducible). The symmetric eigensolver and the
//! Gram-Schmidt orthonormalisation are local.

use crate::error::{Error, Result};

/// Row-major view description for a gemm operand: `(rows, cols, row_stride, col_stride)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MatView {
    pub rows: usize,
    pub cols: usize,
    pub rs: isize,
    pub cs: isize,
}

impl MatView {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn span(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return 0;
        }
        ((self.rows - 1) as isize * self.rs + (self.cols - 1) as isize * self.cs) as usize + 1
    }
}

/// `c = alpha * a * b + beta * c` where `c` is dense row-major `a.rows x b.cols`.
pub(crate) fn gemm(alpha: f64, a: &[f64], av: MatView, b: &[f64], bv: MatView, beta: f64, c: &mut [f64]) {
    assert_eq!(av.cols, bv.rows, "gemm inner dimension mismatch");
    assert!(
        a.len() >= av.span() && b.len() >= bv.span(),
        "gemm operand out of bounds"
    );
    let (m, k, n) = (av.rows, av.cols, bv.cols);
    assert_eq!(c.len(), m * n, "gemm output size mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: the spans of both operands and the output were bounds-checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            av.rs,
            av.cs,
            b.as_ptr(),
            bv.rs,
            bv.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Row-major `n x n`; column `j` is the eigenvector of `values[j]`.
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi on a symmetric row-major `n x n` matrix.
///
/// Stops when the off-diagonal Frobenius mass drops below `1e-12 * ||A||_F`.
/// Eigenvectors are sorted by descending eigenvalue and sign-normalised so
/// that their largest-magnitude component is positive.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<SymmetricEigen> {
    if matrix.len() != n * n {
        return Err(Error::Size(format!(
            "expected {n}x{n} matrix, got {} entries",
            matrix.len()
        )));
    }
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-12 * norm;
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS && off(&a) > tol {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for k in 0..n {
            let x = v[k * n + src];
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            sign = -1.0;
        }
        for k in 0..n {
            vectors[k * n + dst] = sign * v[k * n + src];
        }
    }
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Orthonormalises the columns of a row-major `rows x cols` matrix in place
/// by modified Gram-Schmidt with one re-orthogonalisation pass.
pub(crate) fn orthonormalize_columns(m: &mut [f64], rows: usize, cols: usize) -> Result<()> {
    for j in 0..cols {
        let before = (0..rows).map(|r| m[r * cols + j].powi(2)).sum::<f64>().sqrt();
        for _pass in 0..2 {
            for i in 0..j {
                let dot: f64 = (0..rows).map(|r| m[r * cols + i] * m[r * cols + j]).sum();
                for r in 0..rows {
                    m[r * cols + j] -= dot * m[r * cols + i];
                }
            }
        }
        let norm = (0..rows).map(|r| m[r * cols + j].powi(2)).sum::<f64>().sqrt();
        if norm <= 1e-10 * before || norm == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "column {j} is linearly dependent on earlier columns"
            )));
        }
        for r in 0..rows {
            m[r * cols + j] /= norm;
        }
    }
    Ok(())
}
