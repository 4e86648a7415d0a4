//! Entropic Gromov-Wasserstein alignment of small square cost matrices and
//! the block-wise assembly of the permutation estimate.
//!
//! Couplings exposed by this module have unit row and column sums (soft
//! permutations). The solver itself works with probability marginals `1/s`
//! and rescales by `s` at the boundary; positive rescaling does not change
//! the thresholded permutation.
//!
//! The solver works on the square-loss GW objective: at each outer step the
//! pseudo-cost `L(C_src, C_tgt) (x) Gamma` is formed with the usual three-term
//! decomposition and `exp(-pseudo_cost / eps)` (optionally times `Gamma`) is
//! projected back onto the coupling set with a log-domain Sinkhorn scaling.
//! `eps` starts at a large multiple of the cost scale and decays geometrically
//! to its target; Sinkhorn potentials are warm-started across steps.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{invalid, Error, Result};
use crate::linalg::ensure_finite;
use crate::perm::{check_block_size, Permutation, RLocalPermutation};
use crate::scalar::Scalar;

/// Largest size accepted by [`brute_force_gw`].
pub const BRUTE_FORCE_MAX: usize = 8;

/// Maximum tolerated deviation of a row or column sum from one.
pub const MARGINAL_TOL: f64 = 1e-6;

/// Nonnegative square matrix with unit row and column sums.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling<T: Scalar> {
    gamma: DMatrix<T>,
}

impl<T: Scalar> Coupling<T> {
    pub fn new(gamma: DMatrix<T>) -> Result<Self> {
        if gamma.nrows() != gamma.ncols() {
            return invalid(format!("coupling must be square, got {:?}", gamma.shape()));
        }
        if gamma.iter().any(|g| !g.is_finite() || *g < T::zero()) {
            return invalid("coupling entries must be finite and nonnegative");
        }
        let c = Self { gamma };
        let dev = c.max_marginal_deviation();
        if dev > T::lit(MARGINAL_TOL) {
            return invalid(format!("coupling marginals deviate from one by {}", dev.as_f64()));
        }
        Ok(c)
    }

    pub fn uniform(s: usize) -> Self {
        let w = if s == 0 { T::zero() } else { T::one() / T::from_count(s) };
        Self { gamma: DMatrix::from_element(s, s, w) }
    }

    pub fn from_permutation(p: &Permutation) -> Self {
        Self { gamma: p.to_dense() }
    }

    pub fn size(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.gamma
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.gamma
    }

    pub fn transpose(&self) -> Self {
        Self { gamma: self.gamma.transpose() }
    }

    pub fn max_marginal_deviation(&self) -> T {
        let rows = self.gamma.row_iter().map(|r| (r.sum() - T::one()).abs());
        let cols = self.gamma.column_iter().map(|c| (c.sum() - T::one()).abs());
        rows.chain(cols).fold(T::zero(), |a, b| a.max(b))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    /// `M M^T`.
    #[default]
    Gram,
    /// `||m_p - m_q||^2`.
    SquaredEuclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Epsilon {
    /// Multiple of the mean squared cost difference of the two inputs.
    Relative(f64),
    Absolute(f64),
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::Relative(5e-3)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GwConfig {
    /// Final regularization weight.
    pub epsilon: Epsilon,
    /// First-step weight as a multiple of the final one; 1 disables annealing.
    pub anneal_ratio: f64,
    /// Per-step multiplicative decay of the weight until it reaches `epsilon`.
    pub anneal_decay: f64,
    pub update: GwUpdate,
    pub outer_iters: usize,
    pub sinkhorn_iters: usize,
    /// Relative change of the coupling below which the outer loop stops.
    pub tol: f64,
    pub cost_kind: CostKind,
}

impl Default for GwConfig {
    fn default() -> Self {
        Self {
            epsilon: Epsilon::default(),
            anneal_ratio: 200.0,
            anneal_decay: 0.8,
            update: GwUpdate::default(),
            outer_iters: 200,
            sinkhorn_iters: 50,
            tol: 1e-7,
            cost_kind: CostKind::Gram,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GwUpdate {
    /// `Gamma <- proj(exp(-pseudo / eps))`.
    #[default]
    Entropic,
    /// `Gamma <- proj(Gamma * exp(-pseudo / eps))` (KL proximal step).
    Proximal,
}

impl GwConfig {
    pub fn validate(&self) -> Result<()> {
        let eps = match self.epsilon {
            Epsilon::Relative(e) | Epsilon::Absolute(e) => e,
        };
        if !(eps > 0.0 && eps.is_finite())
            || !(self.tol > 0.0 && self.tol.is_finite())
            || !(self.anneal_ratio >= 1.0 && self.anneal_ratio.is_finite())
            || !(self.anneal_decay > 0.0 && self.anneal_decay < 1.0)
            || self.outer_iters == 0
            || self.sinkhorn_iters == 0
        {
            return invalid(format!("GW configuration must be positive: {self:?}"));
        }
        Ok(())
    }
}

fn check_pair<T: Scalar>(src: &DMatrix<T>, tgt: &DMatrix<T>) -> Result<usize> {
    let s = src.nrows();
    if src.ncols() != s || tgt.shape() != (s, s) {
        return invalid(format!("cost matrices must be square and equal: {:?} vs {:?}", src.shape(), tgt.shape()));
    }
    Ok(s)
}

/// `sum_{p',q',p,q} (src[p',q'] - tgt[p,q])^2 G[p',p] G[q',q]` by direct summation.
pub fn gw_cost_quartic<T: Scalar>(src: &DMatrix<T>, tgt: &DMatrix<T>, gamma: &DMatrix<T>) -> T {
    let s = src.nrows();
    let mut acc = T::zero();
    for pp in 0..s {
        for qq in 0..s {
            for p in 0..s {
                let g1 = gamma[(pp, p)];
                if g1 == T::zero() {
                    continue;
                }
                for q in 0..s {
                    let diff = src[(pp, qq)] - tgt[(p, q)];
                    acc += diff * diff * g1 * gamma[(qq, q)];
                }
            }
        }
    }
    acc
}

/// Same objective as [`gw_cost_quartic`] in `O(s^3)`:
/// `a^T (src.^2) a + b^T (tgt.^2) b - 2 <src, G tgt G^T>` with `a`, `b` the
/// row and column sums of `G`.
pub fn gw_cost_contracted<T: Scalar>(src: &DMatrix<T>, tgt: &DMatrix<T>, gamma: &DMatrix<T>) -> T {
    let rows: DVector<T> = gamma.column_sum();
    let cols: DVector<T> = gamma.row_sum().transpose();
    let src2 = src.component_mul(src);
    let tgt2 = tgt.component_mul(tgt);
    let cross = gamma * tgt * gamma.transpose();
    rows.dot(&(&src2 * &rows)) + cols.dot(&(&tgt2 * &cols)) - T::lit(2.0) * src.dot(&cross)
}

/// GW objective of a coupling; quartic summation up to `s = 8`, contraction above.
pub fn gw_cost<T: Scalar>(src: &DMatrix<T>, tgt: &DMatrix<T>, gamma: &Coupling<T>) -> Result<T> {
    let s = check_pair(src, tgt)?;
    if gamma.size() != s {
        return invalid(format!("coupling of size {} for cost matrices of size {s}", gamma.size()));
    }
    Ok(if s <= BRUTE_FORCE_MAX {
        gw_cost_quartic(src, tgt, gamma.matrix())
    } else {
        gw_cost_contracted(src, tgt, gamma.matrix())
    })
}

/// Mean over all index quadruples of `(src[p',q'] - tgt[p,q])^2`.
pub fn cost_scale<T: Scalar>(src: &DMatrix<T>, tgt: &DMatrix<T>) -> T {
    let k_src = T::from_count(src.len().max(1));
    let k_tgt = T::from_count(tgt.len().max(1));
    let mean_src = src.sum() / k_src;
    let mean_tgt = tgt.sum() / k_tgt;
    src.norm_squared() / k_src + tgt.norm_squared() / k_tgt - T::lit(2.0) * mean_src * mean_tgt
}

fn log_sum_exp<T: Scalar>(vals: impl Iterator<Item = T> + Clone) -> T {
    let max = vals.clone().fold(T::lit(f64::NEG_INFINITY), |a, b| a.max(b));
    if !max.is_finite() {
        return max;
    }
    max + vals.map(|v| (v - max).exp()).fold(T::zero(), |a, b| a + b).ln()
}

/// Scales `exp(log_kernel)` to marginals `1/s` in the log domain; returns the
/// log of the scaled matrix.
/// Scales `log_kernel` towards marginals `1/s`, updating the potentials in
/// place, and returns the log coupling (columns exact, rows approximate).
fn sinkhorn_log<T: Scalar>(
    log_kernel: &DMatrix<T>,
    f: &mut DVector<T>,
    g: &mut DVector<T>,
    iters: usize,
) -> Result<DMatrix<T>> {
    let s = log_kernel.nrows();
    let log_marg = -T::from_count(s).ln();
    let target = T::lit(MARGINAL_TOL) * T::lit(1e-2) / T::from_count(s);
    for _ in 0..iters {
        for i in 0..s {
            let lse = log_sum_exp((0..s).map(|j| log_kernel[(i, j)] + g[j]));
            if !lse.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "Sinkhorn kernel row {i} vanished; increase epsilon"
                )));
            }
            f[i] = log_marg - lse;
        }
        for j in 0..s {
            let lse = log_sum_exp((0..s).map(|i| log_kernel[(i, j)] + f[i]));
            if !lse.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "Sinkhorn kernel column {j} vanished; increase epsilon"
                )));
            }
            g[j] = log_marg - lse;
        }
        // columns are exact after the g update; check rows
        let worst = (0..s)
            .map(|i| {
                let row = (0..s).map(|j| (log_kernel[(i, j)] + f[i] + g[j]).exp()).fold(T::zero(), |a, b| a + b);
                (row - T::one() / T::from_count(s)).abs()
            })
            .fold(T::zero(), |a, b| a.max(b));
        if worst <= target {
            break;
        }
    }
    Ok(DMatrix::from_fn(s, s, |i, j| log_kernel[(i, j)] + f[i] + g[j]))
}

/// Moves an approximately balanced nonnegative matrix onto the set with all
/// row and column sums equal to `marg`: rows and columns are scaled down to
/// the target, then the remaining mass is added as a rank-one correction.
fn round_to_marginals<T: Scalar>(p: &mut DMatrix<T>, marg: T) {
    let s = p.nrows();
    for i in 0..s {
        let sum = p.row(i).sum();
        if sum > marg {
            p.row_mut(i).scale_mut(marg / sum);
        }
    }
    for j in 0..s {
        let sum = p.column(j).sum();
        if sum > marg {
            p.column_mut(j).scale_mut(marg / sum);
        }
    }
    let err_r: DVector<T> = DVector::from_fn(s, |i, _| (marg - p.row(i).sum()).max(T::zero()));
    let err_c: DVector<T> = DVector::from_fn(s, |j, _| (marg - p.column(j).sum()).max(T::zero()));
    let mass = err_r.sum();
    if mass > T::zero() {
        *p += &err_r * err_c.transpose() / mass;
    }
}

/// Result of one entropic GW solve.
#[derive(Clone, Debug)]
pub struct GwReport<T: Scalar> {
    pub coupling: Coupling<T>,
    /// GW objective of `coupling` (unit marginals).
    pub cost: T,
    pub iterations: usize,
    pub converged: bool,
    /// `(outer iteration, cost)` after each step; entry 0 is the uniform start.
    pub trace: Vec<(usize, f64)>,
}

/// Entropic GW coupling between `src` (rows) and `tgt` (columns).
pub fn entropic_gw<T: Scalar>(src: &DMatrix<T>, tgt: &DMatrix<T>, cfg: &GwConfig) -> Result<Coupling<T>> {
    Ok(entropic_gw_report(src, tgt, cfg)?.coupling)
}

pub fn entropic_gw_report<T: Scalar>(src: &DMatrix<T>, tgt: &DMatrix<T>, cfg: &GwConfig) -> Result<GwReport<T>> {
    cfg.validate()?;
    let s = check_pair(src, tgt)?;
    ensure_finite(src, "source cost")?;
    ensure_finite(tgt, "target cost")?;
    if s == 0 {
        return invalid("empty cost matrices");
    }
    let s_t = T::from_count(s);
    let unit_cost = |prob: &DMatrix<T>| gw_cost_contracted(src, tgt, prob) * s_t * s_t;

    let eps = match cfg.epsilon {
        Epsilon::Absolute(e) => T::lit(e),
        Epsilon::Relative(rel) => {
            let scale = cost_scale(src, tgt);
            T::lit(rel) * if scale > T::zero() { scale } else { T::one() }
        }
    };

    // Constant part of the pseudo-cost for uniform marginals.
    let marg = T::one() / s_t;
    let src_term: DVector<T> = src.component_mul(src).column_sum() * marg;
    let tgt_term: DVector<T> = tgt.component_mul(tgt).column_sum() * marg;
    let constant = DMatrix::from_fn(s, s, |i, j| src_term[i] + tgt_term[j]);

    let mut prob = DMatrix::from_element(s, s, marg * marg);
    let mut log_prob = prob.map(|v| v.ln());
    let mut best_prob = prob.clone();
    let mut best_cost = unit_cost(&prob);
    let mut trace = vec![(0, best_cost.as_f64())];
    let mut converged = false;
    let mut iterations = 0;
    let mut f = DVector::<T>::zeros(s);
    let mut g = DVector::<T>::zeros(s);
    let mut eps_t = eps * T::lit(cfg.anneal_ratio);

    for it in 1..=cfg.outer_iters {
        iterations = it;
        let pseudo = &constant - (src * &prob * tgt.transpose()) * T::lit(2.0);
        let log_kernel = match cfg.update {
            GwUpdate::Entropic => -pseudo / eps_t,
            GwUpdate::Proximal => &log_prob - pseudo / eps_t,
        };
        let next_log = sinkhorn_log(&log_kernel, &mut f, &mut g, cfg.sinkhorn_iters)?;
        let mut next = next_log.map(|v| v.exp());
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite coupling; increase epsilon".into()));
        }
        round_to_marginals(&mut next, marg);
        let next_log = next.map(|v| v.ln());
        let change = (&next - &prob).norm() / prob.norm();
        prob = next;
        log_prob = next_log;
        let cost = unit_cost(&prob);
        trace.push((it, cost.as_f64()));
        if cost < best_cost {
            best_cost = cost;
            best_prob = prob.clone();
        }
        let annealed = eps_t <= eps;
        if annealed && change < T::lit(cfg.tol) {
            converged = true;
            break;
        }
        eps_t = (eps_t * T::lit(cfg.anneal_decay)).max(eps);
    }

    let coupling = Coupling::new(best_prob * s_t).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::NumericalFailure(format!("Sinkhorn projection infeasible: {msg}")),
        other => other,
    })?;
    Ok(GwReport { coupling, cost: best_cost, iterations, converged, trace })
}

/// Rounds a coupling to the permutation of maximum total weight.
pub fn threshold_to_permutation<T: Scalar>(gamma: &Coupling<T>) -> Permutation {
    max_weight_assignment(gamma.matrix()).expect("couplings are square and finite")
}

/// Exhaustive minimizer of `||src - P tgt P^T||_F^2` where
/// `(P tgt P^T)[i, j] = tgt[pi(i), pi(j)]`.
pub fn brute_force_gw<T: Scalar>(src: &DMatrix<T>, tgt: &DMatrix<T>) -> Result<(Permutation, T)> {
    let s = check_pair(src, tgt)?;
    if s > BRUTE_FORCE_MAX {
        return invalid(format!("brute force limited to s <= {BRUTE_FORCE_MAX}, got {s}"));
    }
    let mut best: Option<(Vec<usize>, T)> = None;
    for pi in (0..s).permutations(s) {
        let mut v = T::zero();
        for i in 0..s {
            for j in 0..s {
                let diff = src[(i, j)] - tgt[(pi[i], pi[j])];
                v += diff * diff;
            }
        }
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((pi, v));
        }
    }
    let (map, value) = best.unwrap_or((Vec::new(), T::zero()));
    Ok((Permutation::new(map)?, value))
}

/// Per-block cost matrix of the rows of `m`.
pub fn block_cost<T: Scalar>(m: &DMatrix<T>, kind: CostKind) -> DMatrix<T> {
    match kind {
        CostKind::Gram => m * m.transpose(),
        CostKind::SquaredEuclidean => {
            let s = m.nrows();
            DMatrix::from_fn(s, s, |i, j| (m.row(i) - m.row(j)).norm_squared())
        }
    }
}

#[derive(Clone, Debug)]
pub struct StageBOutput {
    /// Estimate of the planted permutation: `Y ~ pi_hat . (B X_hat)`.
    pub pi_hat: RLocalPermutation,
    pub block_costs: Vec<f64>,
    pub block_iterations: Vec<usize>,
}

/// Aligns every block of `y_hat` (unpermuted estimate) with the matching block
/// of the observations `y` and assembles the block-diagonal estimate.
pub fn stage_b<T: Scalar>(y_hat: &DMatrix<T>, y: &DMatrix<T>, r: usize, cfg: &GwConfig) -> Result<StageBOutput> {
    if y_hat.shape() != y.shape() {
        return invalid(format!("Y_hat {:?} and Y {:?} differ in shape", y_hat.shape(), y.shape()));
    }
    let k = check_block_size(y.nrows(), r)?;
    let per_block = (0..k)
        .into_par_iter()
        .map(|b| {
            let rows = b * r..(b + 1) * r;
            let c_hat = block_cost(&y_hat.rows(rows.start, r).into_owned(), cfg.cost_kind);
            let c_obs = block_cost(&y.rows(rows.start, r).into_owned(), cfg.cost_kind);
            let report = entropic_gw_report(&c_hat, &c_obs, cfg)?;
            // rows of the transposed coupling index observations
            let pi_k = threshold_to_permutation(&report.coupling.transpose());
            Ok((pi_k, report.cost.as_f64(), report.iterations))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut blocks = Vec::with_capacity(k);
    let mut block_costs = Vec::with_capacity(k);
    let mut block_iterations = Vec::with_capacity(k);
    for (p, c, it) in per_block {
        blocks.push(p);
        block_costs.push(c);
        block_iterations.push(it);
    }
    Ok(StageBOutput { pi_hat: RLocalPermutation::from_blocks(r, blocks)?, block_costs, block_iterations })
}
