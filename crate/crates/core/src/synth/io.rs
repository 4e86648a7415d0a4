//! On-disk instance layout.
//!
//! A directory holding `config.json`, `pi_star.json` and the matrices `B`,
//! `X_star`, `Y`, `Y_clean` and `N` in the `RLUS` binary format: the magic
//! bytes `RLUS`, little-endian `u32` rows and cols, then row-major
//! little-endian `f64` entries. `B.csv` and `Y.csv` are written alongside
//! for interoperability.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::RLocalPermutation;
use crate::scalar::Scalar;
use crate::synth::{InstanceConfig, SensingInstance};

pub const MAGIC: &[u8; 4] = b"RLUS";

pub fn write_matrix<T: Scalar, W: Write>(mut w: W, m: &DMatrix<T>) -> Result<()> {
    let dim = |v: usize| {
        u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("dimension {v} exceeds u32")))
    };
    w.write_all(MAGIC)?;
    w.write_all(&dim(m.nrows())?.to_le_bytes())?;
    w.write_all(&dim(m.ncols())?.to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].as_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix<T: Scalar, R: Read>(mut r: R) -> Result<DMatrix<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let rows = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u32::from_le_bytes(word) as usize;
    let mut m = DMatrix::zeros(rows, cols);
    let mut buf = [0u8; 8];
    for i in 0..rows {
        for j in 0..cols {
            r.read_exact(&mut buf)?;
            m[(i, j)] = T::lit(f64::from_le_bytes(buf));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after matrix payload".into()));
    }
    Ok(m)
}

pub fn save_matrix<T: Scalar>(path: &Path, m: &DMatrix<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix<T: Scalar>(path: &Path) -> Result<DMatrix<T>> {
    read_matrix(BufReader::new(File::open(path)?))
}

/// Plain comma-separated rows, full `f64` round-trip precision.
pub fn write_csv<T: Scalar>(path: &Path, m: &DMatrix<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{}", v.as_f64())).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct StoredConfig {
    #[serde(flatten)]
    config: InstanceConfig,
    sigma2: f64,
}

pub fn save_instance<T: Scalar>(dir: &Path, inst: &SensingInstance<T>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let stored = StoredConfig { config: inst.config.clone(), sigma2: inst.sigma2.as_f64() };
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&stored)?)?;
    fs::write(dir.join("pi_star.json"), serde_json::to_string(&inst.pi_star)?)?;
    save_matrix(&dir.join("B.bin"), &inst.b)?;
    save_matrix(&dir.join("X_star.bin"), &inst.x_star)?;
    save_matrix(&dir.join("Y.bin"), &inst.y)?;
    save_matrix(&dir.join("Y_clean.bin"), &inst.y_clean)?;
    save_matrix(&dir.join("N.bin"), &inst.noise)?;
    write_csv(&dir.join("B.csv"), &inst.b)?;
    write_csv(&dir.join("Y.csv"), &inst.y)?;
    Ok(())
}

pub fn load_instance<T: Scalar>(dir: &Path) -> Result<SensingInstance<T>> {
    let stored: StoredConfig = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)?;
    stored.config.validate()?;
    let pi_star: RLocalPermutation = serde_json::from_str(&fs::read_to_string(dir.join("pi_star.json"))?)?;
    let inst = SensingInstance {
        b: load_matrix(&dir.join("B.bin"))?,
        x_star: load_matrix(&dir.join("X_star.bin"))?,
        y: load_matrix(&dir.join("Y.bin"))?,
        y_clean: load_matrix(&dir.join("Y_clean.bin"))?,
        noise: load_matrix(&dir.join("N.bin"))?,
        sigma2: T::lit(stored.sigma2),
        pi_star,
        config: stored.config,
    };
    let c = &inst.config;
    let shapes = [
        ("B", inst.b.shape(), (c.n, c.d)),
        ("X_star", inst.x_star.shape(), (c.d, c.m)),
        ("Y", inst.y.shape(), (c.n, c.m)),
        ("Y_clean", inst.y_clean.shape(), (c.n, c.m)),
        ("N", inst.noise.shape(), (c.n, c.m)),
    ];
    for (name, got, want) in shapes {
        if got != want {
            return Err(Error::Format(format!("{name} has shape {got:?}, config implies {want:?}")));
        }
    }
    if inst.pi_star.n() != c.n || inst.pi_star.r() != c.r {
        return Err(Error::Format("pi_star does not match config".into()));
    }
    Ok(inst)
}
