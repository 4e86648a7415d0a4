//! One method on one generated instance.

use std::time::Instant;

use nalgebra::DMatrix;
use rlus_core::baselines::{identity_solve, oracle_solve, rlocal_levsort_with, LevsortVariant};
use rlus_core::pipeline::solve_given_permutation;
use rlus_core::{depermute, generate, DepermuteConfig, InstanceConfig, RLocalPermutation, SensingInstance64};
use serde::{Deserialize, Serialize};

use crate::method::Method;
use crate::metrics::{cov_error, fractional_hamming, signal_error};

/// Solver settings applied to every trial of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub depermute: DepermuteConfig,
    pub levsort: LevsortVariant,
}

/// Estimates produced by a method, rows in the original (unpermuted) order.
#[derive(Clone, Debug)]
pub struct MethodOutput {
    pub pi_hat: RLocalPermutation,
    pub x_hat: DMatrix<f64>,
    /// Estimate of `B X*`: the Stage-A estimate for De-permute, `B X_hat` otherwise.
    pub y_hat: DMatrix<f64>,
}

pub fn run_method(method: Method, inst: &SensingInstance64, solver: &SolverConfig) -> rlus_core::Result<MethodOutput> {
    let (b, y, r) = (&inst.b, &inst.y, inst.config.r);
    let (pi_hat, x_hat) = match method {
        Method::Depermute => {
            let sol = depermute(b, y, r, &solver.depermute)?;
            return Ok(MethodOutput { pi_hat: sol.pi_hat, x_hat: sol.x_hat, y_hat: sol.y_hat });
        }
        Method::Levsort => {
            let pi = rlocal_levsort_with(b, y, r, solver.levsort)?;
            let x = solve_given_permutation(b, y, &pi)?;
            (pi, x)
        }
        Method::Identity => identity_solve(b, y, r)?,
        Method::Oracle => (inst.pi_star.clone(), oracle_solve(inst)?),
    };
    let y_hat = b * &x_hat;
    Ok(MethodOutput { pi_hat, x_hat, y_hat })
}

/// Outcome of one trial. Failed trials carry NaN metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config: InstanceConfig,
    pub method: Method,
    #[serde(with = "nan_as_null")]
    pub frac_hamming: f64,
    #[serde(with = "nan_as_null")]
    pub cov_error: f64,
    #[serde(with = "nan_as_null")]
    pub signal_error: f64,
    pub wall_ms: f64,
    pub failed: bool,
}

/// JSON has no NaN: failed metrics travel as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl TrialRecord {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    fn failure(config: &InstanceConfig, method: Method, wall_ms: f64) -> Self {
        Self {
            config: config.clone(),
            method,
            frac_hamming: f64::NAN,
            cov_error: f64::NAN,
            signal_error: f64::NAN,
            wall_ms,
            failed: true,
        }
    }
}

/// Runs `method` on an already generated instance and scores it.
pub fn evaluate(inst: &SensingInstance64, method: Method, solver: &SolverConfig) -> TrialRecord {
    let start = Instant::now();
    let out = run_method(method, inst, solver);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let out = match out {
        Ok(out) => out,
        Err(e) => {
            log::warn!("{method} failed on {:?}: {e}", inst.config);
            return TrialRecord::failure(&inst.config, method, wall_ms);
        }
    };
    let Ok(fh) = fractional_hamming(&out.pi_hat, &inst.pi_star) else {
        return TrialRecord::failure(&inst.config, method, wall_ms);
    };
    let record = TrialRecord {
        config: inst.config.clone(),
        method,
        frac_hamming: fh,
        cov_error: cov_error(&out.y_hat, &inst.y_clean),
        signal_error: signal_error(&out.x_hat, &inst.x_star),
        wall_ms,
        failed: false,
    };
    if [record.cov_error, record.signal_error].iter().all(|v| v.is_finite()) {
        record
    } else {
        log::warn!("{method} produced non-finite metrics on {:?}", inst.config);
        TrialRecord::failure(&inst.config, method, wall_ms)
    }
}

/// Generates the instance for `cfg` and evaluates `method` on it.
pub fn run_trial(cfg: &InstanceConfig, method: Method, solver: &SolverConfig) -> TrialRecord {
    run_methods(cfg, &[method], solver).pop().expect("one method")
}

/// Evaluates several methods on the same generated instance.
pub fn run_methods(cfg: &InstanceConfig, methods: &[Method], solver: &SolverConfig) -> Vec<TrialRecord> {
    match generate::<f64>(cfg) {
        Ok(inst) => methods.iter().map(|&m| evaluate(&inst, m, solver)).collect(),
        Err(e) => {
            log::warn!("cannot generate {cfg:?}: {e}");
            methods.iter().map(|&m| TrialRecord::failure(cfg, m, 0.0)).collect()
        }
    }
}
