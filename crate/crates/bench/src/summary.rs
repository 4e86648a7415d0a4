//! Per-cell means and standard errors.

use std::cmp::Ordering;
use std::io::Write;

use anyhow::{bail, Result};
use serde::Serialize;

use crate::method::Method;
use crate::trial::TrialRecord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(count)`; zero for a single value.
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let k = values.len();
        if k == 0 {
            return Stat { mean: f64::NAN, stderr: f64::NAN, min: f64::NAN, max: f64::NAN };
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // rounding in the sum can push the mean of equal values past the range
        let mean = (values.iter().sum::<f64>() / k as f64).clamp(min, max);
        let stderr = if k > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, stderr, min, max }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub d: usize,
    pub r: usize,
    pub n: usize,
    pub m: usize,
    pub snr_db: Option<f64>,
    /// Successful trials; failed ones are excluded from the statistics.
    pub count: usize,
    pub failed: usize,
    pub frac_hamming: Stat,
    pub cov_error: Stat,
    pub signal_error: Stat,
    pub wall_ms: Stat,
}

fn cell_order(a: &TrialRecord, b: &TrialRecord) -> Ordering {
    let snr = |t: &TrialRecord| t.config.snr_db.unwrap_or(f64::INFINITY);
    (a.config.r, a.config.n, a.config.m, a.method, a.config.d)
        .cmp(&(b.config.r, b.config.n, b.config.m, b.method, b.config.d))
        .then(snr(a).total_cmp(&snr(b)))
}

/// Groups by grid cell and method, ordered by `(r, n, m, method)`.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        bail!("nothing to summarize");
    }
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by(|a, b| cell_order(a, b));
    let rows = sorted
        .chunk_by(|a, b| cell_order(a, b) == Ordering::Equal)
        .map(|group| {
            let ok: Vec<&TrialRecord> = group.iter().copied().filter(|t| !t.failed).collect();
            let stat = |f: fn(&TrialRecord) -> f64| Stat::of(&ok.iter().map(|t| f(t)).collect::<Vec<_>>());
            let c = &group[0].config;
            SummaryRow {
                method: group[0].method,
                d: c.d,
                r: c.r,
                n: c.n,
                m: c.m,
                snr_db: c.snr_db,
                count: ok.len(),
                failed: group.len() - ok.len(),
                frac_hamming: stat(|t| t.frac_hamming),
                cov_error: stat(|t| t.cov_error),
                signal_error: stat(|t| t.signal_error),
                wall_ms: stat(|t| t.wall_ms),
            }
        })
        .collect();
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["method", "d", "r", "n", "m", "snr_db", "count", "failed"].into_iter().map(String::from).collect::<Vec<_>>();
    for metric in ["frac_hamming", "cov_error", "signal_error", "wall_ms"] {
        header.push(format!("{metric}_mean"));
        header.push(format!("{metric}_stderr"));
    }
    out.write_record(&header)?;
    for row in rows {
        let mut fields = vec![
            row.method.to_string(),
            row.d.to_string(),
            row.r.to_string(),
            row.n.to_string(),
            row.m.to_string(),
            row.snr_db.map_or_else(String::new, |s| s.to_string()),
            row.count.to_string(),
            row.failed.to_string(),
        ];
        for s in [row.frac_hamming, row.cov_error, row.signal_error, row.wall_ms] {
            fields.push(s.mean.to_string());
            fields.push(s.stderr.to_string());
        }
        out.write_record(&fields)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    serde_json::to_writer_pretty(w, rows)?;
    Ok(())
}
