//! Grid sweeps: Cartesian product of the grids times Monte Carlo runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use rlus_core::InstanceConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::method::Method;
use crate::records::write_jsonl_record;
use crate::trial::{run_methods, SolverConfig, TrialRecord};

fn default_runs() -> usize {
    25
}

fn default_snr() -> Vec<Option<f64>> {
    vec![Some(30.0)]
}

fn default_methods() -> Vec<Method> {
    vec![Method::Depermute]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub d: usize,
    pub r: Vec<usize>,
    /// Grid over `n / r`.
    pub n_multiples: Vec<usize>,
    pub m: Vec<usize>,
    /// `null` entries are noiseless.
    #[serde(default = "default_snr")]
    pub snr_db: Vec<Option<f64>>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// One grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub d: usize,
    pub r: usize,
    pub n: usize,
    pub m: usize,
    pub snr_db: Option<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.r.is_empty() || self.n_multiples.is_empty() || self.m.is_empty() || self.snr_db.is_empty() {
            bail!("sweep grids must be nonempty");
        }
        if self.methods.is_empty() {
            bail!("sweep needs at least one method");
        }
        if self.runs == 0 {
            bail!("runs must be at least 1");
        }
        for cell in self.cells() {
            self.instance(&cell, 0).validate().with_context(|| format!("grid point {cell:?}"))?;
        }
        Ok(())
    }

    /// Grid points ordered by `r`, then `n`, `m` and SNR in listed order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &r in &self.r {
            for &k in &self.n_multiples {
                for &m in &self.m {
                    for &snr_db in &self.snr_db {
                        cells.push(Cell { d: self.d, r, n: k * r, m, snr_db });
                    }
                }
            }
        }
        cells
    }

    pub fn instance(&self, cell: &Cell, run: usize) -> InstanceConfig {
        InstanceConfig {
            n: cell.n,
            d: cell.d,
            m: cell.m,
            r: cell.r,
            snr_db: cell.snr_db,
            seed: derive_seed(self.base_seed, cell, run),
        }
    }

    pub fn num_trials(&self) -> usize {
        self.cells().len() * self.runs * self.methods.len()
    }
}

/// Seed of one Monte Carlo run. Methods share it, so they see the same instances.
pub fn derive_seed(base_seed: u64, cell: &Cell, run: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"rlus/seed/v1");
    h.update(base_seed.to_le_bytes());
    for v in [cell.d, cell.r, cell.n, cell.m, run] {
        h.update((v as u64).to_le_bytes());
    }
    match cell.snr_db {
        Some(s) => h.update(s.to_bits().to_le_bytes()),
        None => h.update(b"noiseless"),
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Records are appended here as JSON lines in completion order.
    pub partial: Option<PathBuf>,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<TrialRecord>> {
    run_sweep_with(spec, &SweepOptions::default())
}

/// Runs every trial of `spec`. The returned records are in grid order
/// (cell, run, method) regardless of scheduling.
pub fn run_sweep_with(spec: &SweepSpec, opts: &SweepOptions) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let configs: Vec<InstanceConfig> = spec
        .cells()
        .iter()
        .flat_map(|cell| (0..spec.runs).map(move |run| spec.instance(cell, run)))
        .collect();
    let sink = match &opts.partial {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            Some(Mutex::new(BufWriter::new(f)))
        }
        None => None,
    };
    let done = AtomicUsize::new(0);
    let total = configs.len();
    let work = || {
        configs
            .par_iter()
            .map(|cfg| -> Result<Vec<TrialRecord>> {
                let recs = run_methods(cfg, &spec.methods, &spec.solver);
                if let Some(sink) = &sink {
                    let mut w = sink.lock().expect("partial sink poisoned");
                    for rec in &recs {
                        write_jsonl_record(&mut *w, rec)?;
                    }
                    w.flush()?;
                }
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                log::info!("instance {k}/{total} done (n={} m={} r={})", cfg.n, cfg.m, cfg.r);
                Ok(recs)
            })
            .collect::<Result<Vec<_>>>()
    };
    let nested = match opts.threads {
        Some(k) => rayon::ThreadPoolBuilder::new().num_threads(k).build()?.install(work)?,
        None => work()?,
    };
    Ok(nested.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepSpec {
        SweepSpec {
            d: 4,
            r: vec![3],
            n_multiples: vec![4],
            m: vec![2],
            snr_db: vec![Some(30.0)],
            methods: vec![Method::Depermute],
            runs: 3,
            base_seed: 1,
            solver: SolverConfig::default(),
        }
    }

    #[test]
    fn one_cell_three_runs() {
        let recs = run_sweep(&small()).unwrap();
        assert_eq!(recs.len(), 3);
        let mut seeds: Vec<u64> = recs.iter().map(TrialRecord::seed).collect();
        seeds.dedup();
        assert_eq!(seeds.len(), 3);
    }

    #[test]
    fn seeds_depend_on_every_coordinate() {
        let cell = Cell { d: 8, r: 4, n: 32, m: 2, snr_db: Some(30.0) };
        let base = derive_seed(0, &cell, 0);
        let variants = [
            derive_seed(1, &cell, 0),
            derive_seed(0, &cell, 1),
            derive_seed(0, &Cell { m: 3, ..cell }, 0),
            derive_seed(0, &Cell { n: 36, ..cell }, 0),
            derive_seed(0, &Cell { r: 2, ..cell }, 0),
            derive_seed(0, &Cell { snr_db: None, ..cell }, 0),
            derive_seed(0, &Cell { snr_db: Some(20.0), ..cell }, 0),
        ];
        assert!(variants.iter().all(|&s| s != base));
    }

    #[test]
    fn methods_share_instances_and_order_is_grid_order() {
        let spec = SweepSpec { methods: vec![Method::Depermute, Method::Oracle], n_multiples: vec![4, 5], ..small() };
        let recs = run_sweep_with(&spec, &SweepOptions { threads: Some(3), partial: None }).unwrap();
        assert_eq!(recs.len(), 12);
        for pair in recs.chunks(2) {
            assert_eq!(pair[0].config, pair[1].config);
            assert_eq!((pair[0].method, pair[1].method), (Method::Depermute, Method::Oracle));
        }
        assert!(recs[..6].iter().all(|r| r.config.n == 12) && recs[6..].iter().all(|r| r.config.n == 15));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(SweepSpec { runs: 0, ..small() }.validate().is_err());
        assert!(SweepSpec { m: vec![], ..small() }.validate().is_err());
        assert!(SweepSpec { d: 20, ..small() }.validate().is_err());
    }

    #[test]
    fn spec_json_defaults() {
        let spec: SweepSpec = serde_json::from_str(r#"{"d": 4, "r": [3], "n_multiples": [4], "m": [2]}"#).unwrap();
        assert_eq!(spec.runs, 25);
        assert_eq!(spec.methods, vec![Method::Depermute]);
        assert_eq!(spec.snr_db, vec![Some(30.0)]);
    }
}
