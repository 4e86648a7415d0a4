//! Baked-in grids for the paper's figures.
//!
//! The default grids are desk-scale analogues (`d = 32`, `n/r` in the 24-30
//! range) that finish in minutes. `full` switches to the published settings
//! (`d = 64`, `n/r` in {48, 52, 56, 60}), which take hours on a workstation.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;

use crate::method::Method;
use crate::records::write_csv;
use crate::summary::{summarize, write_summary_csv, write_summary_json, SummaryRow};
use crate::svg::{from_summary, Metric, XAxis};
use crate::sweep::{run_sweep_with, SweepOptions, SweepSpec};
use crate::trial::{SolverConfig, TrialRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Covariance error against the number of views.
    Fig5,
    /// Permutation distortion against the number of measurements.
    Fig6,
}

/// One sub-figure: a sweep plus how to plot it (one SVG per block size).
#[derive(Clone, Debug)]
pub struct Panel {
    pub name: &'static str,
    pub spec: SweepSpec,
    pub x: XAxis,
    pub metric: Metric,
}

fn spec(d: usize, r: &[usize], n_multiples: &[usize], m: &[usize], methods: &[Method]) -> SweepSpec {
    SweepSpec {
        d,
        r: r.to_vec(),
        n_multiples: n_multiples.to_vec(),
        m: m.to_vec(),
        snr_db: vec![Some(30.0)],
        methods: methods.to_vec(),
        runs: 25,
        base_seed: 0,
        solver: SolverConfig::default(),
    }
}

pub fn panels(fig: Figure, full: bool) -> Vec<Panel> {
    use Method::{Depermute, Levsort};
    match (fig, full) {
        (Figure::Fig5, false) => vec![Panel {
            name: "fig5",
            spec: spec(32, &[8], &[28], &[4, 8, 16, 32], &[Depermute]),
            x: XAxis::M,
            metric: Metric::CovError,
        }],
        (Figure::Fig5, true) => vec![Panel {
            name: "fig5",
            spec: spec(64, &[4, 5, 8, 10], &[48], &[4, 8, 16, 32, 64], &[Depermute]),
            x: XAxis::M,
            metric: Metric::CovError,
        }],
        (Figure::Fig6, false) => vec![
            Panel {
                name: "fig6_views",
                spec: spec(32, &[8], &[24, 26, 28, 30], &[8, 32], &[Depermute]),
                x: XAxis::N,
                metric: Metric::FracHamming,
            },
            Panel {
                name: "fig6_levsort",
                spec: spec(32, &[12], &[24, 28], &[32], &[Depermute, Levsort]),
                x: XAxis::N,
                metric: Metric::FracHamming,
            },
        ],
        (Figure::Fig6, true) => vec![
            Panel {
                name: "fig6_views",
                spec: spec(64, &[7, 8, 9, 10], &[48, 52, 56, 60], &[8, 32], &[Depermute]),
                x: XAxis::N,
                metric: Metric::FracHamming,
            },
            Panel {
                name: "fig6_levsort",
                spec: spec(64, &[7, 8, 9, 10], &[48, 52, 56, 60], &[64], &[Depermute, Levsort]),
                x: XAxis::N,
                metric: Metric::FracHamming,
            },
        ],
    }
}

#[derive(Clone, Debug)]
pub struct PanelResult {
    pub name: &'static str,
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Writes `<panel>.csv`, `<panel>_summary.{csv,json}` and `<panel>_r<r>.svg`.
pub fn write_panel(dir: &Path, panel: &Panel, records: &[TrialRecord]) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let create = |file: String| -> Result<BufWriter<File>> {
        let path = dir.join(file);
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    };
    write_csv(create(format!("{}.csv", panel.name))?, records)?;
    let summary = summarize(records)?;
    write_summary_csv(create(format!("{}_summary.csv", panel.name))?, &summary)?;
    write_summary_json(create(format!("{}_summary.json", panel.name))?, &summary)?;
    for &r in &panel.spec.r {
        let rows: Vec<SummaryRow> = summary.iter().filter(|s| s.r == r).cloned().collect();
        let title = format!("{}: d = {}, r = {r}", panel.name, panel.spec.d);
        let svg = from_summary(&title, &rows, panel.x, panel.metric).to_svg();
        fs::write(dir.join(format!("{}_r{r}.svg", panel.name)), svg)?;
    }
    Ok(summary)
}

pub fn reproduce(
    fig: Figure,
    full: bool,
    runs: Option<usize>,
    base_seed: u64,
    dir: &Path,
    opts: &SweepOptions,
) -> Result<Vec<PanelResult>> {
    let mut results = Vec::new();
    for mut panel in panels(fig, full) {
        if let Some(k) = runs {
            panel.spec.runs = k;
        }
        panel.spec.base_seed = base_seed;
        log::info!("{}: {} trials", panel.name, panel.spec.num_trials());
        fs::create_dir_all(dir)?;
        let opts = SweepOptions {
            partial: Some(opts.partial.clone().unwrap_or_else(|| dir.join(format!("{}.partial.jsonl", panel.name)))),
            ..opts.clone()
        };
        let records = run_sweep_with(&panel.spec, &opts)?;
        let summary = write_panel(dir, &panel, &records)?;
        results.push(PanelResult { name: panel.name, records, summary });
    }
    Ok(results)
}
