//! Reference methods: block-wise leverage-score sorting, the identity
//! permutation, and least squares with the true permutation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::error::{invalid, Result};
use crate::linalg::{ensure_finite, ThinSvd};
use crate::perm::{check_block_size, Permutation, RLocalPermutation};
use crate::pipeline::solve_given_permutation;
use crate::scalar::{cmp_scalar, Scalar};
use crate::synth::SensingInstance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    RLocalLevsort,
    Identity,
    OraclePermutation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevsortVariant {
    /// Sort leverage scores inside each block and match by rank.
    #[default]
    SortScores,
    /// Per-block assignment between rows of the two projection matrices,
    /// compared through their sorted absolute within-block entries.
    RowAssignment,
}

/// Squared row norms of an orthonormal basis (diagonal of `U U^T`).
pub fn leverage_scores<T: Scalar>(basis: &DMatrix<T>) -> Vec<T> {
    basis.row_iter().map(|r| r.norm_squared()).collect()
}

pub fn rlocal_levsort<T: Scalar>(b: &DMatrix<T>, y: &DMatrix<T>, r: usize) -> Result<RLocalPermutation> {
    rlocal_levsort_with(b, y, r, LevsortVariant::SortScores)
}

pub fn rlocal_levsort_with<T: Scalar>(
    b: &DMatrix<T>,
    y: &DMatrix<T>,
    r: usize,
    variant: LevsortVariant,
) -> Result<RLocalPermutation> {
    if b.nrows() != y.nrows() {
        return invalid(format!("B has {} rows but Y has {}", b.nrows(), y.nrows()));
    }
    if y.ncols() == 0 {
        return invalid("Y has no views");
    }
    let k = check_block_size(b.nrows(), r)?;
    ensure_finite(b, "B")?;
    ensure_finite(y, "Y")?;
    let u_b = ThinSvd::new(b)?.left_basis();
    let u_y = ThinSvd::new(y)?.left_basis();
    let blocks = match variant {
        LevsortVariant::SortScores => {
            let (lb, ly) = (leverage_scores(&u_b), leverage_scores(&u_y));
            (0..k).map(|blk| sort_match(&lb, &ly, blk, r)).collect::<Result<Vec<_>>>()?
        }
        LevsortVariant::RowAssignment => {
            (0..k).map(|blk| row_assignment(&u_b, &u_y, blk, r)).collect::<Result<Vec<_>>>()?
        }
    };
    RLocalPermutation::from_blocks(r, blocks)
}

fn sort_match<T: Scalar>(lb: &[T], ly: &[T], blk: usize, r: usize) -> Result<Permutation> {
    let order = |s: &[T]| {
        let mut idx: Vec<usize> = (0..r).collect();
        idx.sort_by(|&a, &b| cmp_scalar(&s[blk * r + a], &s[blk * r + b]).then(a.cmp(&b)));
        idx
    };
    let (ob, oy) = (order(lb), order(ly));
    // observation with the i-th smallest score comes from the row with the i-th smallest
    let mut map = vec![0; r];
    for (&q, &p) in oy.iter().zip(&ob) {
        map[q] = p;
    }
    Permutation::new(map)
}

fn row_assignment<T: Scalar>(u_b: &DMatrix<T>, u_y: &DMatrix<T>, blk: usize, r: usize) -> Result<Permutation> {
    let descriptor = |u: &DMatrix<T>, i: usize| {
        let ui = u.row(blk * r + i);
        let mut v: Vec<T> = (0..r).map(|j| ui.dot(&u.row(blk * r + j)).abs()).collect();
        v.sort_by(cmp_scalar);
        v
    };
    let db: Vec<Vec<T>> = (0..r).map(|i| descriptor(u_b, i)).collect();
    let dy: Vec<Vec<T>> = (0..r).map(|i| descriptor(u_y, i)).collect();
    let cost = DMatrix::from_fn(r, r, |q, p| {
        dy[q].iter().zip(&db[p]).fold(T::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b))
    });
    min_cost_assignment(&cost)
}

/// Least squares with no de-permutation.
pub fn identity_solve<T: Scalar>(b: &DMatrix<T>, y: &DMatrix<T>, r: usize) -> Result<(RLocalPermutation, DMatrix<T>)> {
    let pi = RLocalPermutation::identity(b.nrows(), r)?;
    let x = solve_given_permutation(b, y, &pi)?;
    Ok((pi, x))
}

/// `B^+ (Pi*^{-1} Y)` with the ground-truth permutation.
pub fn oracle_solve<T: Scalar>(inst: &SensingInstance<T>) -> Result<DMatrix<T>> {
    solve_given_permutation(&inst.b, &inst.y, &inst.pi_star)
}
