//! Accuracy measures shared by every method.

use nalgebra::DMatrix;

pub use rlus_core::fractional_hamming;

/// `||Y_hat Y_hat^T - Y Y^T||_F / ||Y Y^T||_F` without forming `n x n` Gram
/// matrices: with `[Y_hat Y] = Q [R_a R_b]`, the difference equals
/// `Q (R_a R_a^T - R_b R_b^T) Q^T` and `Q` has orthonormal columns.
pub fn cov_error(y_hat: &DMatrix<f64>, y_star: &DMatrix<f64>) -> f64 {
    assert_eq!(y_hat.shape(), y_star.shape(), "cov_error: shape mismatch");
    let m = y_star.ncols();
    let mut joint = DMatrix::zeros(y_star.nrows(), 2 * m);
    joint.columns_mut(0, m).copy_from(y_hat);
    joint.columns_mut(m, m).copy_from(y_star);
    let r = joint.qr().r();
    let (ra, rb) = (r.columns(0, m), r.columns(m, m));
    let c_star = rb * rb.transpose();
    (ra * ra.transpose() - &c_star).norm() / c_star.norm()
}

/// `||X_hat - X*||_F / ||X*||_F`.
pub fn signal_error(x_hat: &DMatrix<f64>, x_star: &DMatrix<f64>) -> f64 {
    (x_hat - x_star).norm() / x_star.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, g: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| g.random_range(-1.0..1.0))
    }

    #[test]
    fn cov_error_matches_dense_gram() {
        let mut g = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let y = random(30, 4, &mut g);
            for scale in [0.3, 1e-9] {
                let y_hat = &y + random(30, 4, &mut g) * scale;
                let dense = (&y_hat * y_hat.transpose() - &y * y.transpose()).norm() / (&y * y.transpose()).norm();
                assert!((cov_error(&y_hat, &y) - dense).abs() < 1e-12 * (1.0 + dense / scale));
            }
        }
    }

    #[test]
    fn cov_error_is_sign_invariant() {
        let mut g = ChaCha8Rng::seed_from_u64(4);
        let y = random(12, 3, &mut g);
        assert!(cov_error(&y, &y) < 1e-14);
        assert!(cov_error(&-&y, &y) < 1e-14);
    }

    #[test]
    fn signal_error_is_relative() {
        let x = DMatrix::from_element(2, 2, 2.0);
        assert!((signal_error(&(&x * 1.5), &x) - 0.5).abs() < 1e-15);
    }
}
