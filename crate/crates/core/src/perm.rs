//! Permutations and block-diagonal (r-local) permutations.
//!
//! A [`Permutation`] of size `s` is stored as an index map: `map[i]` is the
//! column holding the single nonzero of row `i` of the permutation matrix.
//! Applying it to a matrix therefore gathers rows: output row `i` is input
//! row `map[i]`.
//!
//! An [`RLocalPermutation`] is a block-diagonal permutation of `n = r * K`
//! elements made of `K` independent blocks of size `r`. Block `k` acts on the
//! global rows `k*r .. k*r + r`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &j in &map {
            if j >= map.len() || seen[j] {
                return invalid(format!("{map:?} is not a bijection on 0..{}", map.len()));
            }
            seen[j] = true;
        }
        Ok(Self { map })
    }

    pub fn identity(size: usize) -> Self {
        Self { map: (0..size).collect() }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &j) in self.map.iter().enumerate() {
            inv[j] = i;
        }
        Self { map: inv }
    }

    /// `apply(self.then(other), M) == apply(self, apply(other, M))`.
    pub fn then(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return invalid(format!("composing sizes {} and {}", self.len(), other.len()));
        }
        Ok(Self { map: self.map.iter().map(|&i| other.map[i]).collect() })
    }

    /// Uniformly random permutation (Fisher-Yates).
    pub fn sample<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Self {
        let mut map: Vec<usize> = (0..size).collect();
        map.shuffle(rng);
        Self { map }
    }

    /// Dense 0/1 matrix; debugging and test helper only.
    pub fn to_dense<T: Scalar>(&self) -> DMatrix<T> {
        let s = self.len();
        let mut m = DMatrix::zeros(s, s);
        for (i, &j) in self.map.iter().enumerate() {
            m[(i, j)] = T::one();
        }
        m
    }

    /// Gathers rows: output row `i` is input row `map[i]`.
    pub fn apply<T: Scalar>(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        if m.nrows() != self.len() {
            return invalid(format!("permutation of size {} applied to {} rows", self.len(), m.nrows()));
        }
        Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(self.map[i], j)]))
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(map: Vec<usize>) -> Result<Self> {
        Self::new(map)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.map
    }
}

#[derive(Serialize, Deserialize)]
struct RLocalRepr {
    r: usize,
    blocks: Vec<Permutation>,
}

/// Block-diagonal permutation with `n / r` blocks of size `r`.
///
/// Serialized as `{"r": 4, "blocks": [[...], [...]]}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RLocalRepr", into = "RLocalRepr")]
pub struct RLocalPermutation {
    r: usize,
    blocks: Vec<Permutation>,
}

impl TryFrom<RLocalRepr> for RLocalPermutation {
    type Error = Error;

    fn try_from(repr: RLocalRepr) -> Result<Self> {
        Self::from_blocks(repr.r, repr.blocks)
    }
}

impl From<RLocalPermutation> for RLocalRepr {
    fn from(p: RLocalPermutation) -> Self {
        RLocalRepr { r: p.r, blocks: p.blocks }
    }
}

pub(crate) fn check_block_size(n: usize, r: usize) -> Result<usize> {
    if r == 0 || n == 0 {
        return invalid(format!("block size r = {r} and size n = {n} must be positive"));
    }
    if !n.is_multiple_of(r) {
        return invalid(format!("block size r = {r} does not divide n = {n}"));
    }
    Ok(n / r)
}

impl RLocalPermutation {
    pub fn from_blocks(r: usize, blocks: Vec<Permutation>) -> Result<Self> {
        if r == 0 || blocks.is_empty() {
            return invalid("an r-local permutation needs r > 0 and at least one block");
        }
        if let Some(b) = blocks.iter().find(|b| b.len() != r) {
            return invalid(format!("block of size {} in an r-local permutation with r = {r}", b.len()));
        }
        Ok(Self { r, blocks })
    }

    pub fn identity(n: usize, r: usize) -> Result<Self> {
        let k = check_block_size(n, r)?;
        Ok(Self { r, blocks: vec![Permutation::identity(r); k] })
    }

    /// Builds from a global index map, checking the block-diagonal support.
    pub fn from_global(r: usize, map: &[usize]) -> Result<Self> {
        let k = check_block_size(map.len(), r)?;
        let mut blocks = Vec::with_capacity(k);
        for (b, chunk) in map.chunks(r).enumerate() {
            let offset = b * r;
            let local = chunk
                .iter()
                .map(|&j| {
                    if j < offset || j >= offset + r {
                        invalid(format!("index {j} leaves block {b}"))
                    } else {
                        Ok(j - offset)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            blocks.push(Permutation::new(local)?);
        }
        Ok(Self { r, blocks })
    }

    /// Draws every block independently and uniformly from the `r!` permutations.
    pub fn sample<R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> Result<Self> {
        let k = check_block_size(n, r)?;
        Ok(Self { r, blocks: (0..k).map(|_| Permutation::sample(r, rng)).collect() })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n(&self) -> usize {
        self.r * self.blocks.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, k: usize) -> &Permutation {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[Permutation] {
        &self.blocks
    }

    #[inline]
    pub fn map_global(&self, i: usize) -> usize {
        let k = i / self.r;
        k * self.r + self.blocks[k].get(i % self.r)
    }

    pub fn global_map(&self) -> Vec<usize> {
        (0..self.n()).map(|i| self.map_global(i)).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.blocks.iter().all(Permutation::is_identity)
    }

    pub fn inverse(&self) -> Self {
        Self { r: self.r, blocks: self.blocks.iter().map(Permutation::inverse).collect() }
    }

    /// `apply(self.then(other), M) == apply(self, apply(other, M))`.
    pub fn then(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.then(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { r: self.r, blocks })
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.r != other.r || self.n() != other.n() {
            return invalid(format!(
                "r-local permutations differ in shape: (n={}, r={}) vs (n={}, r={})",
                self.n(),
                self.r,
                other.n(),
                other.r
            ));
        }
        Ok(())
    }

    /// Row `i` of the output is row `map_global(i)` of `m`.
    pub fn apply<T: Scalar>(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        if m.nrows() != self.n() {
            return invalid(format!("r-local permutation of size {} applied to {} rows", self.n(), m.nrows()));
        }
        Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(self.map_global(i), j)]))
    }

    pub fn apply_vec<T: Scalar>(&self, v: &DVector<T>) -> Result<DVector<T>> {
        if v.len() != self.n() {
            return invalid(format!("r-local permutation of size {} applied to length {}", self.n(), v.len()));
        }
        Ok(DVector::from_fn(v.len(), |i, _| v[self.map_global(i)]))
    }

    /// Dense `n x n` expansion; debugging and test helper only.
    pub fn to_dense<T: Scalar>(&self) -> DMatrix<T> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, self.map_global(i))] = T::one();
        }
        m
    }
}

/// Number of rows on which the two permutations disagree.
pub fn hamming_distortion(a: &RLocalPermutation, b: &RLocalPermutation) -> Result<usize> {
    a.check_compatible(b)?;
    Ok((0..a.n()).filter(|&i| a.map_global(i) != b.map_global(i)).count())
}

/// Hamming distortion divided by `n`.
pub fn fractional_hamming(a: &RLocalPermutation, b: &RLocalPermutation) -> Result<f64> {
    Ok(hamming_distortion(a, b)? as f64 / a.n() as f64)
}
