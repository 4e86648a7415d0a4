//! CSV (schema v1) and JSON-lines persistence of trial records.

use std::io::{BufRead, Read, Write};

use anyhow::{bail, Context, Result};
use rlus_core::InstanceConfig;
use serde::{Deserialize, Serialize};

use crate::method::Method;
use crate::trial::TrialRecord;

pub const SCHEMA: &str = "v1";

/// Flat CSV layout. Column order is part of the schema.
#[derive(Debug, Serialize, Deserialize)]
struct Row {
    schema: String,
    method: Method,
    n: usize,
    d: usize,
    m: usize,
    r: usize,
    snr_db: Option<f64>,
    seed: u64,
    frac_hamming: f64,
    cov_error: f64,
    signal_error: f64,
    wall_ms: f64,
    failed: bool,
}

impl From<&TrialRecord> for Row {
    fn from(t: &TrialRecord) -> Self {
        let c = &t.config;
        Row {
            schema: SCHEMA.into(),
            method: t.method,
            n: c.n,
            d: c.d,
            m: c.m,
            r: c.r,
            snr_db: c.snr_db,
            seed: c.seed,
            frac_hamming: t.frac_hamming,
            cov_error: t.cov_error,
            signal_error: t.signal_error,
            wall_ms: t.wall_ms,
            failed: t.failed,
        }
    }
}

impl From<Row> for TrialRecord {
    fn from(r: Row) -> Self {
        TrialRecord {
            config: InstanceConfig { n: r.n, d: r.d, m: r.m, r: r.r, snr_db: r.snr_db, seed: r.seed },
            method: r.method,
            frac_hamming: r.frac_hamming,
            cov_error: r.cov_error,
            signal_error: r.signal_error,
            wall_ms: r.wall_ms,
            failed: r.failed,
        }
    }
}

pub fn write_csv<W: Write>(w: W, records: &[TrialRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for rec in records {
        out.serialize(Row::from(rec))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.with_context(|| format!("record {}", i + 1))?;
        if row.schema != SCHEMA {
            bail!("record {}: unsupported schema `{}` (expected {SCHEMA})", i + 1, row.schema);
        }
        records.push(row.into());
    }
    Ok(records)
}

pub fn write_jsonl_record<W: Write>(mut w: W, rec: &TrialRecord) -> Result<()> {
    serde_json::to_writer(&mut w, rec)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TrialRecord>> {
    r.lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .enumerate()
        .map(|(i, line)| {
            let line = line?;
            serde_json::from_str(&line).with_context(|| format!("line {}", i + 1))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(failed: bool) -> TrialRecord {
        let nan_or = |v: f64| if failed { f64::NAN } else { v };
        TrialRecord {
            config: InstanceConfig { n: 24, d: 4, m: 2, r: 3, snr_db: if failed { None } else { Some(30.0) }, seed: 9 },
            method: Method::Levsort,
            frac_hamming: nan_or(0.125),
            cov_error: nan_or(0.5),
            signal_error: nan_or(1e-3),
            wall_ms: 1.5,
            failed,
        }
    }

    #[test]
    fn header_is_schema_v1() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[record(false)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "schema,method,n,d,m,r,snr_db,seed,frac_hamming,cov_error,signal_error,wall_ms,failed"
        );
        assert!(text.lines().nth(1).unwrap().starts_with("v1,levsort,24,4,2,3,30.0,9,"));
    }

    #[test]
    fn csv_round_trip_keeps_nan_and_noiseless() {
        let recs = vec![record(false), record(true)];
        let mut buf = Vec::new();
        write_csv(&mut buf, &recs).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0], recs[0]);
        assert!(back[1].failed && back[1].frac_hamming.is_nan() && back[1].config.snr_db.is_none());
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[record(false)]).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("\nv1,", "\nv0,");
        assert!(read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let mut buf = Vec::new();
        write_jsonl_record(&mut buf, &record(false)).unwrap();
        write_jsonl_record(&mut buf, &record(true)).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back[0], record(false));
        assert!(back[1].failed && back[1].cov_error.is_nan());
    }
}
