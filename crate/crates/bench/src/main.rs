use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rlus_bench::records::{read_csv, write_csv};
use rlus_bench::reproduce::{reproduce, write_panel, Figure, Panel};
use rlus_bench::svg::{Metric, XAxis};
use rlus_bench::{evaluate, run_method, run_sweep_with, Method, SolverConfig, SweepOptions, SweepSpec};
use rlus_core::synth::io::{load_instance, save_instance};
use rlus_core::{generate, CandidateMode, InstanceConfig, SensingInstance64};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rlus", version, about = "r-local unlabeled sensing: solvers and Monte Carlo experiments")]
struct Cli {
    /// Worker threads for sweeps (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one synthetic instance and store it in a directory.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        r: usize,
        /// Omit for noiseless measurements.
        #[arg(long)]
        snr_db: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one method on a stored instance and write the estimate as JSON.
    Solve {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "depermute")]
        method: Method,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid sweep described by a JSON spec.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write summaries and plots here.
        #[arg(long)]
        summary_dir: Option<PathBuf>,
        /// Stream records as JSON lines while the sweep runs.
        #[arg(long)]
        partial: Option<PathBuf>,
    },
    /// Summarize a results CSV into tables and plots.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Re-run the experiments behind a figure of the paper.
    Reproduce {
        figure: Figure,
        /// Published grid (d = 64) instead of the desk-scale analogue.
        #[arg(long)]
        full: bool,
        /// Monte Carlo runs per grid point (default 25).
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SolverFlags {
    /// JSON solver configuration; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_augmentations: Option<usize>,
    #[arg(long, value_parser = parse_candidate_mode)]
    candidate_mode: Option<CandidateMode>,
    #[arg(long)]
    refine_rounds: Option<usize>,
}

fn parse_candidate_mode(s: &str) -> Result<CandidateMode, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown candidate mode `{s}` (expected rank-matched or cross-product)"))
}

impl SolverFlags {
    fn resolve(&self) -> Result<SolverConfig> {
        let mut cfg: SolverConfig = match &self.config {
            Some(path) => serde_json::from_reader(BufReader::new(open(path)?))
                .with_context(|| format!("parsing {}", path.display()))?,
            None => SolverConfig::default(),
        };
        if self.max_augmentations.is_some() {
            cfg.depermute.stage_a.max_augmentations = self.max_augmentations;
        }
        if let Some(mode) = self.candidate_mode {
            cfg.depermute.stage_a.candidate_mode = mode;
        }
        if let Some(k) = self.refine_rounds {
            cfg.depermute.refine_rounds = k;
        }
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    method: Method,
    instance: &'a InstanceConfig,
    pi_hat: Vec<usize>,
    /// Row-major `d x m`.
    x_hat: Vec<Vec<f64>>,
    frac_hamming: f64,
    cov_error: f64,
    signal_error: f64,
    wall_ms: f64,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn summarize_to(dir: &Path, records: &[rlus_bench::TrialRecord]) -> Result<()> {
    let mut rs: Vec<usize> = records.iter().map(|t| t.config.r).collect();
    rs.sort_unstable();
    rs.dedup();
    let d = records.first().map_or(0, |t| t.config.d);
    let panel = Panel {
        name: "sweep",
        spec: SweepSpec {
            d,
            r: rs,
            n_multiples: vec![],
            m: vec![],
            snr_db: vec![],
            methods: vec![],
            runs: 1,
            base_seed: 0,
            solver: SolverConfig::default(),
        },
        x: XAxis::N,
        metric: Metric::FracHamming,
    };
    write_panel(dir, &panel, records)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let opts = SweepOptions { threads: cli.threads, partial: None };
    match cli.cmd {
        Command::Generate { n, d, m, r, snr_db, seed, out } => {
            let cfg = InstanceConfig { n, d, m, r, snr_db, seed };
            let inst = generate::<f64>(&cfg)?;
            save_instance(&out, &inst)?;
            log::info!("wrote instance to {}", out.display());
        }
        Command::Solve { input, method, solver, out } => {
            let inst: SensingInstance64 = load_instance(&input)?;
            let solver = solver.resolve()?;
            let est = run_method(method, &inst, &solver)?;
            let rec = evaluate(&inst, method, &solver);
            let output = SolveOutput {
                method,
                instance: &inst.config,
                pi_hat: est.pi_hat.global_map(),
                x_hat: est.x_hat.row_iter().map(|r| r.iter().copied().collect()).collect(),
                frac_hamming: rec.frac_hamming,
                cov_error: rec.cov_error,
                signal_error: rec.signal_error,
                wall_ms: rec.wall_ms,
            };
            serde_json::to_writer_pretty(create(&out)?, &output)?;
        }
        Command::Sweep { spec, out, summary_dir, partial } => {
            let spec: SweepSpec = serde_json::from_reader(BufReader::new(open(&spec)?))
                .with_context(|| format!("parsing {}", spec.display()))?;
            let records = run_sweep_with(&spec, &SweepOptions { partial, ..opts })?;
            write_csv(create(&out)?, &records)?;
            if let Some(dir) = summary_dir {
                summarize_to(&dir, &records)?;
            }
        }
        Command::Summarize { input, out_dir } => {
            let records = read_csv(BufReader::new(open(&input)?))?;
            summarize_to(&out_dir, &records)?;
        }
        Command::Reproduce { figure, full, runs, base_seed, out } => {
            for panel in reproduce(figure, full, runs, base_seed, &out, &opts)? {
                for row in &panel.summary {
                    println!(
                        "{:<14} {:<10} r={:<3} n={:<4} m={:<3} frac_hamming {:.4} ± {:.4}  cov_error {:.4} ± {:.4}",
                        panel.name,
                        row.method,
                        row.r,
                        row.n,
                        row.m,
                        row.frac_hamming.mean,
                        row.frac_hamming.stderr,
                        row.cov_error.mean,
                        row.cov_error.stderr
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RLUS_LOG", "warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
