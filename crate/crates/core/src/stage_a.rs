//! Per-view alternating augmentation.
//!
//! Starting from the collapsed system (one labeled equation per block), each
//! iteration sorts the current estimate `y_hat = B x` and the observed view
//! `y` inside every still-active block, pairs rows with measurements of equal
//! rank, and appends to the labeled system the single (row of `B`,
//! measurement) pair whose min-norm solve leaves the smallest forward error
//! between `y` and `B x`. After `d - n/r` appends the labeled system is square
//! and its solution is the de-noised view estimate handed to block alignment.
//!
//! The forward error is measured after sorting both vectors inside every
//! block ([`ErrorMetric::BlockSorted`]), which makes the whole loop invariant
//! to the unknown local permutation; [`ErrorMetric::Observed`] compares them
//! in observed row order instead.
//!
//! Two least-squares routes score a candidate pair. [`LsqStrategy::Direct`]
//! re-solves the augmented system by SVD for each candidate.
//! [`LsqStrategy::Incremental`] keeps the null-space projector of the current
//! system and updates the min-norm solution for one appended row in closed
//! form; it falls back to the direct route when the new row is (numerically)
//! in the current row space.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collapse::{block_sums, collapse};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, ThinSvd};
use crate::perm::{check_block_size, Permutation};
use crate::scalar::{cmp_scalar, Scalar};

/// Which (row, measurement) pairs of a block are scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    /// The i-th smallest entry of `y_hat` paired with the i-th smallest of `y`.
    #[default]
    RankMatched,
    /// Every feasible row paired with every feasible measurement of the block.
    CrossProduct,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LsqStrategy {
    Direct,
    #[default]
    Incremental,
}

/// How the forward error of a candidate estimate `z = B x` is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMetric {
    /// `||y - z||` in the observed row order.
    Observed,
    /// `||sort_k(y) - sort_k(z)||`: both vectors sorted inside every block,
    /// i.e. the residual under the best r-local matching.
    #[default]
    BlockSorted,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageAConfig {
    /// Number of appended pairs; `None` means `d - n/r` (saturating). Larger
    /// budgets keep appending once the system is square and solve it in the
    /// least-squares sense.
    pub max_augmentations: Option<usize>,
    pub candidate_mode: CandidateMode,
    pub strategy: LsqStrategy,
    pub error_metric: ErrorMetric,
}

impl StageAConfig {
    /// Resolves the augmentation budget for an `n x d` problem with blocks of `r`.
    pub fn augmentations(&self, n: usize, d: usize, r: usize) -> Result<usize> {
        let k = check_block_size(n, r)?;
        let available = n - k;
        match self.max_augmentations {
            Some(t) if t > available => {
                invalid(format!("max_augmentations = {t} exceeds the {available} matchable pairs"))
            }
            Some(t) => Ok(t),
            None => Ok(d.saturating_sub(k).min(available)),
        }
    }
}

/// The labeled system grown by Stage-A together with its feasible index sets.
#[derive(Clone, Debug)]
pub struct AugmentedSystem<T: Scalar> {
    /// Collapsed rows followed by the appended rows of `B`.
    pub b_aug: DMatrix<T>,
    pub y_aug: DVector<T>,
    /// Appended (row of `B`, measurement index) pairs in order.
    pub matched: Vec<(usize, usize)>,
    r: usize,
    in_p: Vec<bool>,
    in_q: Vec<bool>,
    remaining: Vec<usize>,
    active: Vec<bool>,
}

impl<T: Scalar> AugmentedSystem<T> {
    pub fn new(b: &DMatrix<T>, y_j: &DVector<T>, r: usize) -> Result<Self> {
        if b.nrows() != y_j.len() {
            return invalid(format!("B has {} rows but the view has {}", b.nrows(), y_j.len()));
        }
        let n = b.nrows();
        let k = check_block_size(n, r)?;
        let y_col = DMatrix::from_column_slice(n, 1, y_j.as_slice());
        let cs = collapse(b, &y_col, r)?;
        Ok(Self {
            b_aug: cs.b_tilde,
            y_aug: cs.y_tilde.column(0).into_owned(),
            matched: Vec::new(),
            r,
            in_p: vec![true; n],
            in_q: vec![true; n],
            remaining: vec![r; k],
            active: vec![r >= 2; k],
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n(&self) -> usize {
        self.in_p.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.active.len()
    }

    pub fn p_mask(&self) -> &[bool] {
        &self.in_p
    }

    pub fn q_mask(&self) -> &[bool] {
        &self.in_q
    }

    /// Unmatched rows of `B`.
    pub fn feasible_p(&self) -> Vec<usize> {
        mask_indices(&self.in_p)
    }

    /// Unmatched measurement indices.
    pub fn feasible_q(&self) -> Vec<usize> {
        mask_indices(&self.in_q)
    }

    pub fn active_blocks(&self) -> Vec<usize> {
        mask_indices(&self.active)
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active[k]
    }

    /// Minimum-norm solution of the current labeled system.
    pub fn solve(&self) -> Result<DVector<T>> {
        linalg::lstsq_vec(&self.b_aug, &self.y_aug)
    }

    /// The system with `(b_p^T, y_j(q))` appended, without mutating `self`.
    pub fn extended(&self, b: &DMatrix<T>, y_j: &DVector<T>, p: usize, q: usize) -> (DMatrix<T>, DVector<T>) {
        let rows = self.b_aug.nrows();
        let mut a = self.b_aug.clone().insert_row(rows, T::zero());
        a.row_mut(rows).copy_from(&b.row(p));
        let v = self.y_aug.clone().insert_row(rows, y_j[q]);
        (a, v)
    }

    /// Appends `(b_p^T, y_j(q))`, removes `p` and `q` from the feasible sets and
    /// retires the block once a single index remains.
    pub fn append(&mut self, b: &DMatrix<T>, y_j: &DVector<T>, p: usize, q: usize) -> Result<()> {
        let k = p / self.r;
        if !self.in_p[p] || !self.in_q[q] {
            return Err(Error::InternalInvariant(format!("pair ({p}, {q}) is not feasible")));
        }
        if q / self.r != k || !self.active[k] {
            return Err(Error::InternalInvariant(format!("pair ({p}, {q}) is not in an active common block")));
        }
        let (a, v) = self.extended(b, y_j, p, q);
        self.b_aug = a;
        self.y_aug = v;
        self.in_p[p] = false;
        self.in_q[q] = false;
        self.remaining[k] -= 1;
        if self.remaining[k] < 2 {
            self.active[k] = false;
        }
        self.matched.push((p, q));
        Ok(())
    }
}

fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &on)| on).map(|(i, _)| i).collect()
}

/// Indices of block `k` still in `active`, ordered by ascending `v`, ties by index.
pub fn block_sort_indices<T: Scalar>(v: &[T], active: &[bool], r: usize, k: usize) -> Vec<usize> {
    let lo = k * r;
    let hi = (lo + r).min(v.len());
    let mut idx: Vec<usize> = (lo..hi).filter(|&i| active[i]).collect();
    idx.sort_by(|&a, &b| cmp_scalar(&v[a], &v[b]).then(a.cmp(&b)));
    idx
}

pub fn candidate_pairs(ps: &[usize], qs: &[usize], mode: CandidateMode) -> Result<Vec<(usize, usize)>> {
    match mode {
        CandidateMode::RankMatched => {
            if ps.len() != qs.len() {
                return Err(Error::InternalInvariant(format!(
                    "rank matching needs equal lengths, got {} and {}",
                    ps.len(),
                    qs.len()
                )));
            }
            Ok(ps.iter().copied().zip(qs.iter().copied()).collect())
        }
        CandidateMode::CrossProduct => {
            Ok(ps.iter().flat_map(|&p| qs.iter().map(move |&q| (p, q))).collect())
        }
    }
}

/// Solves the system with `(b_p^T, y_j(q))` appended and returns
/// `(||y_j - B x||, x)`.
pub fn forward_error<T: Scalar>(
    b: &DMatrix<T>,
    y_j: &DVector<T>,
    aug: &AugmentedSystem<T>,
    p: usize,
    q: usize,
) -> Result<(T, DVector<T>)> {
    let (a, v) = aug.extended(b, y_j, p, q);
    let x = linalg::lstsq_vec(&a, &v)?;
    let err = (y_j - b * &x).norm();
    Ok((err, x))
}

/// `v` with every block of `r` entries sorted ascending.
pub fn sort_within_blocks<T: Scalar>(v: &[T], r: usize) -> Vec<T> {
    let mut out = v.to_vec();
    for chunk in out.chunks_mut(r) {
        chunk.sort_by(cmp_scalar);
    }
    out
}

/// Forward error of the estimate `z` against the view `y_j`; `y_sorted` is
/// `sort_within_blocks(y_j, r)`.
pub fn measure_error<T: Scalar>(metric: ErrorMetric, y_j: &DVector<T>, y_sorted: &[T], z: &DVector<T>, r: usize) -> T {
    match metric {
        ErrorMetric::Observed => (y_j - z).norm(),
        ErrorMetric::BlockSorted => {
            let zs = sort_within_blocks(z.as_slice(), r);
            zs.iter().zip(y_sorted).fold(T::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b)).sqrt()
        }
    }
}

/// Closed-form scoring of single-row appends to the current system `A x = y~`.
///
/// With `x0 = A^+ y~` and `N = I - A^+ A`, appending `(b_p^T, c)`:
/// * if `b_p^T N b_p > 0` the new min-norm solution is
///   `x0 + (c - b_p^T x0) / (b_p^T N b_p) * N b_p`;
/// * otherwise `b_p` lies in the row space and, with `G = (A^T A)^+`, the
///   least-squares update is `x0 + (c - b_p^T x0) / (1 + b_p^T G b_p) * G b_p`.
struct IncrementalScorer<T: Scalar> {
    x0: DVector<T>,
    y_hat: DVector<T>,
    residual: DVector<T>,
    /// Columns `N b_p`, `d x n`.
    null_dirs: DMatrix<T>,
    /// Columns `B N b_p`, `n x n`.
    image: DMatrix<T>,
    /// Columns `G b_p` and `B G b_p`, present once the system has full column rank
    /// or some row lies in its row space.
    row_space: Option<(DMatrix<T>, DMatrix<T>)>,
    row_norms2: Vec<T>,
}

enum Update<T> {
    Null(T),
    RowSpace(T),
}

impl<T: Scalar> IncrementalScorer<T> {
    fn new(b: &DMatrix<T>, y_j: &DVector<T>, aug: &AugmentedSystem<T>) -> Result<Self> {
        let svd = ThinSvd::new(&aug.b_aug)?;
        let y_aug = DMatrix::from_column_slice(aug.y_aug.len(), 1, aug.y_aug.as_slice());
        let x0 = svd.solve(&y_aug).column(0).into_owned();
        let v = svd.right_basis();
        let bt = b.transpose();
        let null_dirs = &bt - &v * (v.transpose() * &bt);
        let image = b * &null_dirs;
        let y_hat = b * &x0;
        let residual = y_j - &y_hat;
        let row_norms2: Vec<T> = b.row_iter().map(|row| row.norm_squared()).collect();
        let mut scorer = Self { x0, y_hat, residual, null_dirs, image, row_space: None, row_norms2 };
        if (0..b.nrows()).any(|p| scorer.pivot(p).is_none()) {
            let dirs = svd.gram_pseudo_inverse() * &bt;
            let img = b * &dirs;
            scorer.row_space = Some((dirs, img));
        }
        Ok(scorer)
    }

    fn pivot(&self, p: usize) -> Option<T> {
        let denom = self.image[(p, p)];
        let floor = T::lit(1e3) * T::machine_eps() * self.row_norms2[p];
        (denom > floor).then_some(denom)
    }

    fn update(&self, y_j: &DVector<T>, p: usize, q: usize) -> Option<Update<T>> {
        let gap = y_j[q] - self.y_hat[p];
        match self.pivot(p) {
            Some(denom) => Some(Update::Null(gap / denom)),
            None => {
                let (_, img) = self.row_space.as_ref()?;
                Some(Update::RowSpace(gap / (T::one() + img[(p, p)])))
            }
        }
    }

    fn image_column(&self, u: &Update<T>, p: usize) -> Option<(T, nalgebra::DVectorView<'_, T>)> {
        match u {
            Update::Null(a) => Some((*a, self.image.column(p))),
            Update::RowSpace(a) => self.row_space.as_ref().map(|(_, img)| (*a, img.column(p))),
        }
    }

    fn score(&self, y_j: &DVector<T>, p: usize, q: usize) -> Option<T> {
        let u = self.update(y_j, p, q)?;
        let (alpha, col) = self.image_column(&u, p)?;
        let mut acc = T::zero();
        for (ri, gi) in self.residual.iter().zip(col.iter()) {
            let e = *ri - alpha * *gi;
            acc += e * e;
        }
        Some(acc.sqrt())
    }

    fn estimate(&self, y_j: &DVector<T>, p: usize, q: usize) -> Option<DVector<T>> {
        let u = self.update(y_j, p, q)?;
        let (alpha, col) = self.image_column(&u, p)?;
        Some(&self.y_hat + col * alpha)
    }

    fn solution(&self, y_j: &DVector<T>, p: usize, q: usize) -> Option<DVector<T>> {
        match self.update(y_j, p, q)? {
            Update::Null(a) => Some(&self.x0 + self.null_dirs.column(p) * a),
            Update::RowSpace(a) => self.row_space.as_ref().map(|(dirs, _)| &self.x0 + dirs.column(p) * a),
        }
    }
}

/// One appended pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageAStep {
    pub t: usize,
    pub block: usize,
    pub p: usize,
    pub q: usize,
    pub forward_error: f64,
}

#[derive(Clone, Debug)]
pub struct StageAOutput<T: Scalar> {
    pub y_hat: DVector<T>,
    pub x_hat: DVector<T>,
    pub matched: Vec<(usize, usize)>,
    pub trace: Vec<StageAStep>,
}

/// Relative (to `||y_j||`) gap below which two forward errors tie.
pub const TIE_TOL: f64 = 1e-10;

struct Best<T> {
    err: T,
    block: usize,
    p: usize,
    q: usize,
}

impl<T: Scalar> Best<T> {
    /// Errors closer than `tie` are equal and fall back to index order.
    fn beats(&self, other: &Option<Best<T>>, tie: T) -> bool {
        match other {
            None => true,
            Some(o) if (self.err - o.err).abs() <= tie => (self.block, self.p, self.q) < (o.block, o.p, o.q),
            Some(o) => cmp_scalar(&self.err, &o.err) == Ordering::Less,
        }
    }
}

/// Runs the augmentation loop on a single view `y_j`.
pub fn run_stage_a<T: Scalar>(
    b: &DMatrix<T>,
    y_j: &DVector<T>,
    r: usize,
    cfg: &StageAConfig,
) -> Result<StageAOutput<T>> {
    linalg::ensure_finite(b, "B")?;
    if y_j.iter().any(|v| !v.is_finite()) {
        return invalid("view contains non-finite entries");
    }
    let budget = cfg.augmentations(b.nrows(), b.ncols(), r)?;
    let mut aug = AugmentedSystem::new(b, y_j, r)?;
    let mut x = aug.solve()?;
    let mut y_hat = b * &x;
    let mut trace = Vec::with_capacity(budget);
    let y_sorted = sort_within_blocks(y_j.as_slice(), r);
    let tie = T::lit(TIE_TOL) * y_j.norm();

    for t in 0..budget {
        let scorer = match cfg.strategy {
            LsqStrategy::Incremental => Some(IncrementalScorer::new(b, y_j, &aug)?),
            LsqStrategy::Direct => None,
        };
        let mut best: Option<Best<T>> = None;
        for k in aug.active_blocks() {
            let ps = block_sort_indices(y_hat.as_slice(), aug.p_mask(), r, k);
            let qs = block_sort_indices(y_j.as_slice(), aug.q_mask(), r, k);
            for (p, q) in candidate_pairs(&ps, &qs, cfg.candidate_mode)? {
                let err = match cfg.error_metric {
                    ErrorMetric::Observed => match scorer.as_ref().and_then(|s| s.score(y_j, p, q)) {
                        Some(e) => e,
                        None => forward_error(b, y_j, &aug, p, q)?.0,
                    },
                    metric => {
                        let z = match scorer.as_ref().and_then(|s| s.estimate(y_j, p, q)) {
                            Some(z) => z,
                            None => b * forward_error(b, y_j, &aug, p, q)?.1,
                        };
                        measure_error(metric, y_j, &y_sorted, &z, r)
                    }
                };
                let cand = Best { err, block: k, p, q };
                if cand.beats(&best, tie) {
                    best = Some(cand);
                }
            }
        }
        let Some(best) = best else { break };
        x = match scorer.as_ref().and_then(|s| s.solution(y_j, best.p, best.q)) {
            Some(x) => x,
            None => forward_error(b, y_j, &aug, best.p, best.q)?.1,
        };
        aug.append(b, y_j, best.p, best.q)?;
        y_hat = b * &x;
        trace.push(StageAStep { t, block: best.block, p: best.p, q: best.q, forward_error: best.err.as_f64() });
    }

    Ok(StageAOutput { y_hat, x_hat: x, matched: aug.matched, trace })
}

/// Stage-A over every column of `Y`, views in parallel.
#[derive(Clone, Debug)]
pub struct StageAViews<T: Scalar> {
    /// `n x m` de-noised estimate, column `j` from view `j`.
    pub y_hat: DMatrix<T>,
    pub x_hat: DMatrix<T>,
    pub traces: Vec<Vec<StageAStep>>,
}

pub fn run_stage_a_views<T: Scalar>(
    b: &DMatrix<T>,
    y: &DMatrix<T>,
    r: usize,
    cfg: &StageAConfig,
) -> Result<StageAViews<T>> {
    if b.nrows() != y.nrows() {
        return invalid(format!("B has {} rows but Y has {}", b.nrows(), y.nrows()));
    }
    let views = (0..y.ncols())
        .into_par_iter()
        .map(|j| run_stage_a(b, &y.column(j).into_owned(), r, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut y_hat = DMatrix::zeros(y.nrows(), y.ncols());
    let mut x_hat = DMatrix::zeros(b.ncols(), y.ncols());
    let mut traces = Vec::with_capacity(views.len());
    for (j, v) in views.into_iter().enumerate() {
        y_hat.set_column(j, &v.y_hat);
        x_hat.set_column(j, &v.x_hat);
        traces.push(v.trace);
    }
    Ok(StageAViews { y_hat, x_hat, traces })
}

/// `sum_{p,q} -(y_p - y_q)^2 (z_{pi(p)} - z_{pi(q)})^2`, the per-view
/// alignment objective between measurements `y` and estimates `z`.
pub fn qap_1d_objective<T: Scalar>(y: &[T], z: &[T], pi: &Permutation) -> T {
    let mut acc = T::zero();
    for p in 0..y.len() {
        for q in 0..y.len() {
            let dy = y[p] - y[q];
            let dz = z[pi.get(p)] - z[pi.get(q)];
            acc -= dy * dy * dz * dz;
        }
    }
    acc
}

/// Best of the two rank alignments between `y` and `z`: ascending with
/// ascending, or ascending with descending.
pub fn rank_matching_1d<T: Scalar>(y: &[T], z: &[T]) -> (Permutation, T) {
    let all = vec![true; y.len()];
    let ys = block_sort_indices(y, &all, y.len().max(1), 0);
    let zs = block_sort_indices(z, &all, z.len().max(1), 0);
    let assign = |zs: &mut dyn Iterator<Item = usize>| {
        let mut map = vec![0; y.len()];
        for (&p, zp) in ys.iter().zip(zs) {
            map[p] = zp;
        }
        Permutation::new(map).expect("rank alignment is a bijection")
    };
    let up = assign(&mut zs.iter().copied());
    let down = assign(&mut zs.iter().rev().copied());
    let (cu, cd) = (qap_1d_objective(y, z, &up), qap_1d_objective(y, z, &down));
    if cd < cu {
        (down, cd)
    } else {
        (up, cu)
    }
}

/// Block sums of a single view, exposed for diagnostics.
pub fn collapsed_view<T: Scalar>(y_j: &DVector<T>, r: usize) -> Result<DVector<T>> {
    let col = DMatrix::from_column_slice(y_j.len(), 1, y_j.as_slice());
    Ok(block_sums(&col, r)?.column(0).into_owned())
}
