//! Synthetic instances of `Y = Pi B X + N`.
//!
//! `B` and `X` have i.i.d. standard normal entries, the r-local permutation
//! is uniform, and the noise variance is set from the SNR as
//! `sigma^2 = ||B X||_F^2 / (n * 10^(snr_db / 10))`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::perm::{check_block_size, RLocalPermutation};
use crate::scalar::Scalar;

pub mod io;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub r: usize,
    /// SNR in decibels; `None` means noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl InstanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 {
            return invalid(format!("d = {} and m = {} must be positive", self.d, self.m));
        }
        if self.n < self.d {
            return invalid(format!("need n >= d, got n = {} and d = {}", self.n, self.d));
        }
        check_block_size(self.n, self.r)?;
        if let Some(s) = self.snr_db {
            if !s.is_finite() {
                return invalid("snr_db must be finite; use None for the noiseless case");
            }
        }
        Ok(())
    }

    /// Linear-power SNR, infinite when noiseless.
    pub fn snr_linear(&self) -> f64 {
        self.snr_db.map_or(f64::INFINITY, |db| 10f64.powf(db / 10.0))
    }
}

/// One realization of the sensing model together with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingInstance<T: Scalar> {
    pub config: InstanceConfig,
    pub b: DMatrix<T>,
    pub x_star: DMatrix<T>,
    pub pi_star: RLocalPermutation,
    pub sigma2: T,
    pub noise: DMatrix<T>,
    /// Observed, permuted and noisy measurements.
    pub y: DMatrix<T>,
    /// `B X*` in the original row order; evaluation only.
    pub y_clean: DMatrix<T>,
}

/// The part of an instance a solver may look at.
#[derive(Clone, Copy, Debug)]
pub struct ProblemView<'a, T: Scalar> {
    pub b: &'a DMatrix<T>,
    pub y: &'a DMatrix<T>,
    pub r: usize,
}

fn gaussian_matrix<T: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<T> {
    // Row-major draw order, independent of nalgebra's storage order.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let z: f64 = StandardNormal.sample(rng);
            m[(i, j)] = T::lit(z);
        }
    }
    m
}

/// Noise variance for a given clean signal and SNR in dB.
pub fn noise_variance<T: Scalar>(y_clean: &DMatrix<T>, snr_db: Option<f64>) -> T {
    match snr_db {
        None => T::zero(),
        Some(db) => {
            let n = T::from_count(y_clean.nrows());
            y_clean.norm_squared() / (n * T::lit(10f64.powf(db / 10.0)))
        }
    }
}

/// Deterministic in `cfg.seed`: draws `B`, `X*`, the permutation and the
/// noise in that order from a ChaCha8 stream.
pub fn generate<T: Scalar>(cfg: &InstanceConfig) -> Result<SensingInstance<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let b = gaussian_matrix::<T>(cfg.n, cfg.d, &mut rng);
    let x_star = gaussian_matrix::<T>(cfg.d, cfg.m, &mut rng);
    let pi_star = RLocalPermutation::sample(cfg.n, cfg.r, &mut rng)?;
    let y_clean = &b * &x_star;
    let sigma2 = noise_variance(&y_clean, cfg.snr_db);
    let noise = if cfg.snr_db.is_some() {
        gaussian_matrix::<T>(cfg.n, cfg.m, &mut rng) * sigma2.sqrt()
    } else {
        DMatrix::zeros(cfg.n, cfg.m)
    };
    let y = pi_star.apply(&y_clean)? + &noise;
    let inst = SensingInstance { config: cfg.clone(), b, x_star, pi_star, sigma2, noise, y, y_clean };
    debug_assert!(inst.residual_bookkeeping() <= T::lit(1e-6) * (T::one() + inst.y.norm()));
    Ok(inst)
}

impl<T: Scalar> SensingInstance<T> {
    pub fn problem(&self) -> ProblemView<'_, T> {
        ProblemView { b: &self.b, y: &self.y, r: self.config.r }
    }

    /// `||Y - Pi* Y_clean - N||_F`, zero up to rounding for a consistent instance.
    pub fn residual_bookkeeping(&self) -> T {
        match self.pi_star.apply(&self.y_clean) {
            Ok(p) => (&self.y - p - &self.noise).norm(),
            Err(_) => T::infinity(),
        }
    }

    /// `10 log10(||B X*||_F^2 / (n sigma^2))`, infinite for a noiseless instance.
    pub fn empirical_snr(&self) -> T {
        if self.sigma2 <= T::zero() {
            return T::infinity();
        }
        let n = T::from_count(self.y_clean.nrows());
        let ratio = self.y_clean.norm_squared() / (n * self.sigma2);
        T::lit(10.0) * ratio.log10()
    }
}
