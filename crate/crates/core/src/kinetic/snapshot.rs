//! Binary snapshots of a [`DistributionField`] and CSV macro-field extracts.
//!
//! Layout, little endian: magic `SKDF`, `u32` version, a JSON header prefixed
//! by its `u32` byte length, `u64` value count, then the values as `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DistributionField, KineticSample};
use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, SymmetryKind};
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"SKDF";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub velocity_grid_hash: String,
    pub symmetry: SymmetryKind,
    pub spatial: SpatialGrid,
    pub n_vel: usize,
    pub epsilon: f64,
    pub time: f64,
    pub config_hash: String,
    pub code_version: String,
}

pub fn write_snapshot<T: Real>(path: &Path, header: &SnapshotHeader, f: &DistributionField<T>) -> Result<()> {
    if header.n_vel != f.n_vel() {
        return Err(Error::LengthMismatch {
            expected: f.n_vel(),
            got: header.n_vel,
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    let json = serde_json::to_vec(header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(f.values().len() as u64).to_le_bytes())?;
    for x in f.values() {
        w.write_all(&x.as_f64().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot<T: Real>(path: &Path) -> Result<(SnapshotHeader, DistributionField<T>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a distribution snapshot".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    r.read_exact(&mut b4)?;
    let mut json = vec![0u8; u32::from_le_bytes(b4) as usize];
    r.read_exact(&mut json)?;
    let header: SnapshotHeader = serde_json::from_slice(&json)?;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    if n != header.n_vel * header.spatial.n_cells() {
        return Err(Error::Format(format!(
            "payload holds {n} values, header implies {}",
            header.n_vel * header.spatial.n_cells()
        )));
    }
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        values.push(T::lit(f64::from_le_bytes(b8)));
    }
    let field = DistributionField::new(values, header.n_vel, header.epsilon, header.time)?;
    Ok((header, field))
}

/// Writes `(time, cell, rho, ux, uy, uz, T)` rows.
pub fn write_macro_csv(path: &Path, samples: &[KineticSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time", "cell", "rho", "ux", "uy", "uz", "T"])?;
    for s in samples {
        for (c, m) in s.cells.iter().enumerate() {
            w.write_record([
                format!("{:e}", s.time),
                c.to_string(),
                format!("{:e}", m.rho),
                format!("{:e}", m.u[0]),
                format!("{:e}", m.u[1]),
                format!("{:e}", m.u[2]),
                format!("{:e}", m.temp),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_foreign_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        std::fs::write(&p, b"garbage!").unwrap();
        assert!(matches!(read_snapshot::<f64>(&p), Err(Error::Format(_))));
    }
}
