//! Recovery of a signal and a block-diagonal ("r-local") permutation from
//! shuffled linear measurements `Y = Pi B X + N`.
//!
//! The solver runs in two stages:
//!
//! 1. [`stage_a`]: for every view (column of `Y`) the collapsed system of
//!    block sums, which does not see the permutation, is grown one labeled
//!    equation at a time by pairing rows and measurements of equal rank inside
//!    a block and keeping the pair with the smallest forward error.
//! 2. [`gwalign`]: the Gram matrix of each block of the Stage-A estimate is
//!    aligned with the Gram matrix of the observed block through entropic
//!    Gromov-Wasserstein, and the coupling is rounded to a permutation.
//!
//! [`pipeline::depermute`] chains both stages and re-solves for `X`.
//! [`baselines`] holds the comparison methods and [`synth`] the instance
//! generator.
//!
//! Every numerical routine is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common double-precision case.

pub mod assignment;
pub mod baselines;
pub mod collapse;
pub mod error;
pub mod gwalign;
pub mod linalg;
pub mod perm;
pub mod pipeline;
pub mod scalar;
pub mod stage_a;
pub mod synth;

pub use error::{Error, Result};
pub use gwalign::{Coupling, CostKind, Epsilon, GwConfig};
pub use perm::{fractional_hamming, hamming_distortion, Permutation, RLocalPermutation};
pub use pipeline::{depermute, DepermuteConfig, Diagnostics, Solution};
pub use scalar::Scalar;
pub use stage_a::{CandidateMode, LsqStrategy, StageAConfig};
pub use synth::{generate, InstanceConfig, ProblemView, SensingInstance};

pub type Matrix64 = nalgebra::DMatrix<f64>;
pub type Vector64 = nalgebra::DVector<f64>;
pub type SensingInstance64 = SensingInstance<f64>;
pub type SensingInstance32 = SensingInstance<f32>;
pub type Solution64 = Solution<f64>;
pub type Solution32 = Solution<f32>;
pub type Coupling64 = Coupling<f64>;
pub type CollapsedSystem64 = collapse::CollapsedSystem<f64>;
pub type AugmentedSystem64 = stage_a::AugmentedSystem<f64>;
