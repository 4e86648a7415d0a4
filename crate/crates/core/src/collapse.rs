//! Permutation-invariant collapsed system.
//!
//! Summing the rows of each block removes the within-block permutation:
//! `1^T pi_k B_k X = 1^T B_k X`, so the `n / r` block sums form a labeled
//! (if underdetermined) linear system in `X`.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg;
use crate::perm::check_block_size;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct CollapsedSystem<T: Scalar> {
    /// `(n / r) x d`, row `k` is the column sum of block `k` of `B`.
    pub b_tilde: DMatrix<T>,
    /// `(n / r) x m`, row `k` is the column sum of block `k` of `Y`.
    pub y_tilde: DMatrix<T>,
    pub r: usize,
}

/// Sums each block of `r` consecutive rows.
pub fn block_sums<T: Scalar>(m: &DMatrix<T>, r: usize) -> Result<DMatrix<T>> {
    let k = check_block_size(m.nrows(), r)?;
    let mut out = DMatrix::zeros(k, m.ncols());
    for b in 0..k {
        for i in b * r..(b + 1) * r {
            for j in 0..m.ncols() {
                out[(b, j)] += m[(i, j)];
            }
        }
    }
    Ok(out)
}

pub fn collapse<T: Scalar>(b: &DMatrix<T>, y: &DMatrix<T>, r: usize) -> Result<CollapsedSystem<T>> {
    if b.nrows() != y.nrows() {
        return invalid(format!("B has {} rows but Y has {}", b.nrows(), y.nrows()));
    }
    Ok(CollapsedSystem { b_tilde: block_sums(b, r)?, y_tilde: block_sums(y, r)?, r })
}

impl<T: Scalar> CollapsedSystem<T> {
    pub fn num_equations(&self) -> usize {
        self.b_tilde.nrows()
    }

    /// Minimum-norm solution `B~^+ Y~` (`d x m`).
    pub fn solve(&self) -> Result<DMatrix<T>> {
        linalg::lstsq(&self.b_tilde, &self.y_tilde)
    }
}

/// `B (B~^+ Y~)`, the unpermuted estimate every augmentation run starts from.
pub fn init_estimate<T: Scalar>(cs: &CollapsedSystem<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    if b.ncols() != cs.b_tilde.ncols() {
        return invalid(format!("B has {} columns, collapsed system {}", b.ncols(), cs.b_tilde.ncols()));
    }
    Ok(b * cs.solve()?)
}
