//! Dense linear sum assignment (Hungarian method with row/column potentials).

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::perm::Permutation;
use crate::scalar::Scalar;

/// Minimum-cost perfect matching on a square cost matrix. Row `i` is assigned
/// to column `result.get(i)`. Runs in `O(s^3)`.
pub fn min_cost_assignment<T: Scalar>(cost: &DMatrix<T>) -> Result<Permutation> {
    let s = cost.nrows();
    if s != cost.ncols() {
        return invalid(format!("assignment needs a square matrix, got {}x{}", s, cost.ncols()));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return invalid("assignment cost contains non-finite entries");
    }
    // 1-based potentials; column 0 is the virtual start column.
    let inf = T::infinity();
    let mut u = vec![T::zero(); s + 1];
    let mut v = vec![T::zero(); s + 1];
    let mut row_of = vec![0usize; s + 1];
    let mut way = vec![0usize; s + 1];
    for i in 1..=s {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; s + 1];
        let mut used = vec![false; s + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=s {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=s {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut map = vec![0; s];
    for j in 1..=s {
        map[row_of[j] - 1] = j - 1;
    }
    Permutation::new(map)
}

/// Maximum-weight perfect matching.
pub fn max_weight_assignment<T: Scalar>(weight: &DMatrix<T>) -> Result<Permutation> {
    min_cost_assignment(&weight.map(|w| -w))
}

pub fn assignment_value<T: Scalar>(weight: &DMatrix<T>, perm: &Permutation) -> T {
    (0..perm.len()).fold(T::zero(), |acc, i| acc + weight[(i, perm.get(i))])
}
