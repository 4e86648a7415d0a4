//! Monte Carlo harness for the r-local unlabeled sensing solvers: trial
//! metrics, seeded grid sweeps, CSV/JSON persistence, summaries and SVG plots.

pub mod method;
pub mod metrics;
pub mod records;
pub mod reproduce;
pub mod summary;
pub mod svg;
pub mod sweep;
pub mod trial;

pub use method::Method;
pub use summary::{summarize, Stat, SummaryRow};
pub use sweep::{derive_seed, run_sweep, run_sweep_with, Cell, SweepOptions, SweepSpec};
pub use trial::{evaluate, run_method, run_trial, MethodOutput, SolverConfig, TrialRecord};
