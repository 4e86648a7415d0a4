//! End-to-end de-permutation: augmentation per view, block alignment, and the
//! final least-squares signal estimate.
//!
//! Orientation: the returned `pi_hat` estimates the planted permutation, so
//! `Y ~ pi_hat . B X_hat` and `X_hat = B^+ (pi_hat^{-1} . Y)`.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gwalign::{stage_b, GwConfig};
use crate::linalg::{self, ensure_finite};
use crate::perm::{check_block_size, RLocalPermutation};
use crate::scalar::Scalar;
use crate::stage_a::{run_stage_a_views, StageAConfig, StageAStep};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepermuteConfig {
    pub stage_a: StageAConfig,
    pub gw: GwConfig,
    /// Extra (align blocks, re-solve) rounds after the single pass.
    pub refine_rounds: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub stage_a_traces: Vec<Vec<StageAStep>>,
    pub block_costs: Vec<f64>,
    pub stage_a_ms: f64,
    pub stage_b_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug)]
pub struct Solution<T: Scalar> {
    pub pi_hat: RLocalPermutation,
    pub x_hat: DMatrix<T>,
    /// Stage-A estimate of the unpermuted measurements.
    pub y_hat: DMatrix<T>,
    pub diagnostics: Diagnostics,
}

/// `B^+ (pi^{-1} . Y)`.
pub fn solve_given_permutation<T: Scalar>(
    b: &DMatrix<T>,
    y: &DMatrix<T>,
    pi: &RLocalPermutation,
) -> Result<DMatrix<T>> {
    linalg::lstsq(b, &pi.inverse().apply(y)?)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

pub fn depermute<T: Scalar>(b: &DMatrix<T>, y: &DMatrix<T>, r: usize, cfg: &DepermuteConfig) -> Result<Solution<T>> {
    let (n, d) = b.shape();
    if y.nrows() != n {
        return invalid(format!("B has {n} rows but Y has {}", y.nrows()));
    }
    if n < d {
        return invalid(format!("need n >= d, got n = {n}, d = {d}"));
    }
    if y.ncols() == 0 {
        return invalid("Y has no views");
    }
    check_block_size(n, r)?;
    ensure_finite(b, "B")?;
    ensure_finite(y, "Y")?;
    cfg.gw.validate()?;

    let start = Instant::now();
    let views = run_stage_a_views(b, y, r, &cfg.stage_a)?;
    let stage_a_ms = ms(start);

    let t_b = Instant::now();
    let aligned = stage_b(&views.y_hat, y, r, &cfg.gw)?;
    let mut pi_hat = aligned.pi_hat;
    let mut block_costs = aligned.block_costs;
    let mut x_hat = solve_given_permutation(b, y, &pi_hat)?;
    for _ in 0..cfg.refine_rounds {
        let refined = stage_b(&(b * &x_hat), y, r, &cfg.gw)?;
        pi_hat = refined.pi_hat;
        block_costs = refined.block_costs;
        x_hat = solve_given_permutation(b, y, &pi_hat)?;
    }
    let stage_b_ms = ms(t_b);

    Ok(Solution {
        pi_hat,
        x_hat,
        y_hat: views.y_hat,
        diagnostics: Diagnostics {
            stage_a_traces: views.traces,
            block_costs,
            stage_a_ms,
            stage_b_ms,
            total_ms: ms(start),
        },
    })
}
