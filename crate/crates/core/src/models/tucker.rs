//! Truncated higher-order SVD.

use crate::error::{Error, Result};
use crate::linalg::{gemm, symmetric_eigen, MatView};
use crate::tensor::DenseTensor;

/// Core tensor and one factor matrix (`I_n x K_n`, orthonormal columns) per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerFactors {
    pub core: DenseTensor,
    pub factors: Vec<DenseTensor>,
}

/// Leading `rank` left singular vectors of the `rows x cols` matrix `m`,
/// from the eigenvectors of its Gram matrix.
fn leading_left_vectors(m: &DenseTensor, rank: usize) -> Result<DenseTensor> {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let mut gram = vec![0.0; rows * rows];
    let view = MatView::new(rows, cols);
    gemm(1.0, m.data(), view, m.data(), view.t(), 0.0, &mut gram);
    let eig = symmetric_eigen(&gram, rows)?;
    let mut u = Vec::with_capacity(rows * rank);
    for r in 0..rows {
        u.extend_from_slice(&eig.vectors[r * rows..r * rows + rank]);
    }
    DenseTensor::from_data(vec![rows, rank], u)
}

/// Truncated HOSVD of `x` at multilinear rank `ranks`.
///
/// Modes whose rank equals their extent get the identity factor, which
/// spans the same space as any full orthonormal basis.
pub fn hosvd(x: &DenseTensor, ranks: &[usize]) -> Result<TuckerFactors> {
    if ranks.len() != x.order() {
        return Err(Error::Rank(format!(
            "{} ranks given for an order-{} tensor",
            ranks.len(),
            x.order()
        )));
    }
    let mut factors = Vec::with_capacity(ranks.len());
    for (n, (&rank, &dim)) in ranks.iter().zip(x.shape()).enumerate() {
        if rank == 0 || rank > dim {
            return Err(Error::Rank(format!(
                "rank {rank} invalid for mode {n} with extent {dim}"
            )));
        }
        factors.push(if rank == dim {
            DenseTensor::identity(dim)?
        } else {
            leading_left_vectors(&x.unfold(n)?, rank)?
        });
    }
    let mut core = x.clone();
    for (n, u) in factors.iter().enumerate() {
        if u.shape()[0] != u.shape()[1] || !is_identity(u) {
            core = core.mode_product(&u.transpose()?, n)?;
        }
    }
    Ok(TuckerFactors { core, factors })
}

fn is_identity(u: &DenseTensor) -> bool {
    let n = u.shape()[0];
    u.data()
        .iter()
        .enumerate()
        .all(|(k, &v)| v == if k / n == k % n { 1.0 } else { 0.0 })
}

/// `core x_1 U_1 x_2 ... x_N U_N`.
pub fn tucker_reconstruct(factors: &TuckerFactors) -> Result<DenseTensor> {
    let mut out = factors.core.clone();
    for (n, u) in factors.factors.iter().enumerate() {
        if u.shape()[0] != u.shape()[1] || !is_identity(u) {
            out = out.mode_product(u, n)?;
        }
    }
    Ok(out)
}
