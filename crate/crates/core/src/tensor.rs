//! Dense row-major tensors and the multilinear primitives.
//!
//! Modes are 0-based. The mode-`n` unfolding of a tensor with extents
//! `(I_0, .., I_{N-1})` is the `I_n x prod_{k != n} I_k` matrix whose
//! column index enumerates the remaining modes with the *earlier* modes
//! varying fastest (the Kolda-Bader ordering):
//!
//! ```text
//! j = sum_{k != n} i_k * prod_{m < k, m != n} I_m
//! ```
//!
//! Unfold and fold are explicit index-mapped copies.

use crate::error::{Error, Result};
use crate::linalg::{gemm, MatView};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("tensor order must be at least 1".into()));
    }
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(Error::Shape(format!("extent of mode {pos} is zero in {shape:?}")));
    }
    Ok(shape.iter().product())
}

/// Splits a shape around `mode` into (product before, extent, product after).
pub(crate) fn split_at_mode(shape: &[usize], mode: usize) -> (usize, usize, usize) {
    let pre = shape[..mode].iter().product();
    let post = shape[mode + 1..].iter().product();
    (pre, shape[mode], post)
}

/// For each row-major flat index over `dims`, the column-major flat index
/// of the same multi-index, scaled by `scale`.
fn colmajor_table(dims: &[usize], scale: usize) -> Vec<usize> {
    let len: usize = dims.iter().product();
    let mut cm_stride = Vec::with_capacity(dims.len());
    let mut acc = scale;
    for &d in dims {
        cm_stride.push(acc);
        acc *= d;
    }
    let mut table = Vec::with_capacity(len);
    let mut idx = vec![0usize; dims.len()];
    let mut cur = 0usize;
    for _ in 0..len {
        table.push(cur);
        for k in (0..dims.len()).rev() {
            idx[k] += 1;
            cur += cm_stride[k];
            if idx[k] < dims[k] {
                break;
            }
            cur -= cm_stride[k] * dims[k];
            idx[k] = 0;
        }
    }
    table
}

/// Column offsets of the mode-`mode` unfolding, split into prefix and suffix tables.
struct UnfoldIndex {
    pre: usize,
    dim: usize,
    post: usize,
    col_pre: Vec<usize>,
    col_post: Vec<usize>,
}

impl UnfoldIndex {
    fn new(shape: &[usize], mode: usize) -> Self {
        let (pre, dim, post) = split_at_mode(shape, mode);
        Self {
            pre,
            dim,
            post,
            col_pre: colmajor_table(&shape[..mode], 1),
            col_post: colmajor_table(&shape[mode + 1..], pre),
        }
    }

    fn cols(&self) -> usize {
        self.pre * self.post
    }
}

impl DenseTensor {
    /// Builds a tensor from row-major values.
    pub fn from_data(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(Error::Size(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::DegenerateInput(format!("non-finite value at offset {pos}")));
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        t.data.fill(value);
        Ok(t)
    }

    /// `n x n` identity matrix.
    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    /// I.i.d. standard normal entries from the seeded generator.
    pub fn random_normal(shape: &[usize], seed: u64) -> Result<Self> {
        Self::random_normal_with(shape, &mut SeededRng::new(seed))
    }

    pub fn random_normal_with(shape: &[usize], rng: &mut SeededRng) -> Result<Self> {
        let len = check_shape(shape)?;
        let data = (0..len).map(|_| rng.normal()).collect();
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.order() {
            return Err(Error::Mode(format!(
                "index of length {} for order-{} tensor",
                index.len(),
                self.order()
            )));
        }
        let mut off = 0;
        for (k, (&i, &d)) in index.iter().zip(&self.shape).enumerate() {
            if i >= d {
                return Err(Error::Size(format!("index {i} out of range for mode {k} (extent {d})")));
            }
            off = off * d + i;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        let off = self.offset(index)?;
        self.data[off] = value;
        Ok(())
    }

    /// Same data under a different shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.len() {
            return Err(Error::Size(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::Mode(format!(
                "mode {mode} out of range for order-{} tensor",
                self.order()
            )));
        }
        Ok(())
    }

    fn require_matrix(&self, what: &str) -> Result<(usize, usize)> {
        if self.order() != 2 {
            return Err(Error::Size(format!(
                "{what} must be a matrix, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    /// Mode-`mode` unfolding (see the module docs for the column ordering).
    pub fn unfold(&self, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let ix = UnfoldIndex::new(&self.shape, mode);
        let cols = ix.cols();
        let mut out = vec![0.0; self.len()];
        let mut src = 0;
        for p in 0..ix.pre {
            let cp = ix.col_pre[p];
            for i in 0..ix.dim {
                let row = &mut out[i * cols..(i + 1) * cols];
                for &cq in &ix.col_post {
                    row[cp + cq] = self.data[src];
                    src += 1;
                }
            }
        }
        Ok(Self::from_parts_unchecked(vec![ix.dim, cols], out))
    }

    /// Inverse of [`unfold`](Self::unfold): rebuilds a tensor of `target_shape`.
    pub fn fold(matrix: &Self, mode: usize, target_shape: &[usize]) -> Result<Self> {
        let len = check_shape(target_shape)?;
        if mode >= target_shape.len() {
            return Err(Error::Mode(format!(
                "mode {mode} out of range for target shape {target_shape:?}"
            )));
        }
        let (rows, cols) = matrix.require_matrix("fold input")?;
        if rows != target_shape[mode] || rows * cols != len {
            return Err(Error::Size(format!(
                "{rows}x{cols} matrix cannot fold into {target_shape:?} along mode {mode}"
            )));
        }
        let ix = UnfoldIndex::new(target_shape, mode);
        let mut out = vec![0.0; len];
        let mut dst = 0;
        for p in 0..ix.pre {
            let cp = ix.col_pre[p];
            for i in 0..ix.dim {
                let row = &matrix.data[i * cols..(i + 1) * cols];
                for &cq in &ix.col_post {
                    out[dst] = row[cp + cq];
                    dst += 1;
                }
            }
        }
        Ok(Self::from_parts_unchecked(target_shape.to_vec(), out))
    }

    /// Mode-`mode` product with `a` (`K x I_mode`): replaces extent `I_mode` by `K`.
    pub fn mode_product(&self, a: &Self, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let (k, i_n) = a.require_matrix("mode product factor")?;
        if i_n != self.shape[mode] {
            return Err(Error::Size(format!(
                "factor has {i_n} columns but mode {mode} has extent {}",
                self.shape[mode]
            )));
        }
        let (pre, dim, post) = split_at_mode(&self.shape, mode);
        let mut shape = self.shape.clone();
        shape[mode] = k;
        let mut out = vec![0.0; pre * k * post];
        if post == 1 {
            // (pre x I) * A^T
            gemm(
                1.0,
                &self.data,
                MatView::new(pre, dim),
                &a.data,
                MatView::new(k, dim).t(),
                0.0,
                &mut out,
            );
        } else {
            for p in 0..pre {
                gemm(
                    1.0,
                    &a.data,
                    MatView::new(k, dim),
                    &self.data[p * dim * post..(p + 1) * dim * post],
                    MatView::new(dim, post),
                    0.0,
                    &mut out[p * k * post..(p + 1) * k * post],
                );
            }
        }
        Ok(Self::from_parts_unchecked(shape, out))
    }

    /// Axis permutation: output mode `k` is input mode `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.order())?;
        let n = self.order();
        let mut in_strides = vec![1usize; n];
        for k in (0..n.saturating_sub(1)).rev() {
            in_strides[k] = in_strides[k + 1] * self.shape[k + 1];
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; n];
        let mut src = 0usize;
        for _ in 0..self.len() {
            out.push(self.data[src]);
            for k in (0..n).rev() {
                idx[k] += 1;
                src += strides[k];
                if idx[k] < out_shape[k] {
                    break;
                }
                src -= strides[k] * out_shape[k];
                idx[k] = 0;
            }
        }
        Ok(Self::from_parts_unchecked(out_shape, out))
    }

    /// Matrix transpose of an order-2 tensor.
    pub fn transpose(&self) -> Result<Self> {
        self.require_matrix("transpose input")?;
        self.permute(&[1, 0])
    }

    /// Matrix product of two order-2 tensors.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let (m, k) = self.require_matrix("matmul lhs")?;
        let (k2, n) = rhs.require_matrix("matmul rhs")?;
        if k != k2 {
            return Err(Error::Size(format!("cannot multiply {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            1.0,
            &self.data,
            MatView::new(m, k),
            &rhs.data,
            MatView::new(k, n),
            0.0,
            &mut out,
        );
        Ok(Self::from_parts_unchecked(vec![m, n], out))
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Size(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_parts_unchecked(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_parts_unchecked(self.shape.clone(), self.data.iter().map(|x| x * factor).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts_unchecked(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    /// Number of samples along mode 0.
    pub fn batch_len(&self) -> usize {
        self.shape[0]
    }

    /// Extents of one sample (all modes after mode 0).
    pub fn sample_shape(&self) -> &[usize] {
        &self.shape[1..]
    }

    fn sample_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// Row-major values of sample `b` along mode 0.
    pub fn sample(&self, b: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.sample_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Samples `indices` along mode 0, in the given order.
    pub fn select_batch(&self, indices: &[usize]) -> Result<Self> {
        if self.order() < 2 {
            return Err(Error::Shape("batch selection needs order >= 2".into()));
        }
        if indices.is_empty() {
            return Err(Error::Shape("empty batch selection".into()));
        }
        let n = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &b in indices {
            if b >= self.batch_len() {
                return Err(Error::Size(format!(
                    "sample {b} out of range for batch of {}",
                    self.batch_len()
                )));
            }
            data.extend_from_slice(self.sample(b));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Ok(Self::from_parts_unchecked(shape, data))
    }
}

pub(crate) fn check_permutation(perm: &[usize], order: usize) -> Result<()> {
    if perm.len() != order {
        return Err(Error::Mode(format!(
            "permutation {perm:?} has length {} for order {order}",
            perm.len()
        )));
    }
    let mut seen = vec![false; order];
    for &p in perm {
        if p >= order || seen[p] {
            return Err(Error::Mode(format!("{perm:?} is not a permutation of 0..{order}")));
        }
        seen[p] = true;
    }
    Ok(())
}

pub(crate) fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}
