//! SVD-backed least squares shared by the collapse, augmentation and baseline
//! solvers.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const SVD_MAX_SWEEPS: usize = 10_000;

/// Rank cutoff `max(rows, cols) * eps * sigma_max`.
pub fn rank_tolerance<T: Scalar>(singular_values: &DVector<T>, rows: usize, cols: usize) -> T {
    let sigma_max = singular_values.iter().copied().fold(T::zero(), |a, b| a.max(b));
    T::from_count(rows.max(cols)) * T::machine_eps() * sigma_max
}

pub(crate) fn ensure_finite<T: Scalar>(m: &DMatrix<T>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} contains non-finite entries")))
    }
}

/// Thin SVD together with its numerical rank.
pub struct ThinSvd<T: Scalar> {
    svd: SVD<T, nalgebra::Dyn, nalgebra::Dyn>,
    rank: usize,
    tol: T,
}

impl<T: Scalar> ThinSvd<T> {
    pub fn new(a: &DMatrix<T>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidArgument("SVD of an empty matrix".into()));
        }
        let svd = a
            .clone()
            .try_svd(true, true, T::machine_eps(), SVD_MAX_SWEEPS)
            .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
        let tol = rank_tolerance(&svd.singular_values, a.nrows(), a.ncols());
        let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
        Ok(Self { svd, rank, tol })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn tolerance(&self) -> T {
        self.tol
    }

    fn kept(&self) -> impl Iterator<Item = usize> + '_ {
        let tol = self.tol;
        self.svd
            .singular_values
            .iter()
            .enumerate()
            .filter(move |(_, s)| **s > tol)
            .map(|(i, _)| i)
    }

    /// Minimum-norm least-squares solution `A^+ b`.
    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let u = self.svd.u.as_ref().expect("left vectors requested");
        let v_t = self.svd.v_t.as_ref().expect("right vectors requested");
        let mut x = DMatrix::zeros(v_t.ncols(), b.ncols());
        for i in self.kept() {
            let coeff = u.column(i).transpose() * b / self.svd.singular_values[i];
            x += v_t.row(i).transpose() * coeff;
        }
        x
    }

    pub fn pseudo_inverse(&self) -> DMatrix<T> {
        let u = self.svd.u.as_ref().expect("left vectors requested");
        let v_t = self.svd.v_t.as_ref().expect("right vectors requested");
        let mut p = DMatrix::zeros(v_t.ncols(), u.nrows());
        for i in self.kept() {
            p += v_t.row(i).transpose() * u.column(i).transpose() / self.svd.singular_values[i];
        }
        p
    }

    /// `(A^T A)^+`.
    pub fn gram_pseudo_inverse(&self) -> DMatrix<T> {
        let v_t = self.svd.v_t.as_ref().expect("right vectors requested");
        let mut g = DMatrix::zeros(v_t.ncols(), v_t.ncols());
        for i in self.kept() {
            let s = self.svd.singular_values[i];
            g += v_t.row(i).transpose() * v_t.row(i) / (s * s);
        }
        g
    }

    /// Orthonormal basis of the column space, truncated to the numerical rank.
    pub fn left_basis(&self) -> DMatrix<T> {
        let u = self.svd.u.as_ref().expect("left vectors requested");
        let cols: Vec<usize> = self.kept().collect();
        u.select_columns(cols.iter())
    }

    /// Orthonormal basis of the row space as the columns of a `cols x rank` matrix.
    pub fn right_basis(&self) -> DMatrix<T> {
        let v_t = self.svd.v_t.as_ref().expect("right vectors requested");
        let rows: Vec<usize> = self.kept().collect();
        v_t.select_rows(rows.iter()).transpose()
    }
}

/// Minimum-norm least-squares solve `A^+ B`.
pub fn lstsq<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    if a.nrows() != b.nrows() {
        return Err(Error::InvalidArgument(format!(
            "least squares: {} equations but {} right-hand-side rows",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(ThinSvd::new(a)?.solve(b))
}

pub fn lstsq_vec<T: Scalar>(a: &DMatrix<T>, b: &DVector<T>) -> Result<DVector<T>> {
    let x = lstsq(a, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(x.column(0).into_owned())
}

/// Moore-Penrose pseudoinverse with the standard rank cutoff.
pub fn pinv<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    Ok(ThinSvd::new(a)?.pseudo_inverse())
}
