//! CSV and JSON artifacts: measures with a JSON sidecar, couplings,
//! trajectories, and generic tables. Files are written to a temporary
//! sibling and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jko::FlowTrajectory;
use crate::measures::{ConvexPotential, DiscreteMeasure, ReferenceMeasure};
use crate::transport::Coupling;

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = temp_sibling(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// A table with a header row; every row must match the header length.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::DimensionMismatch {
                expected: header.len(),
                got: row.len(),
            });
        }
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// `coord_1, …, coord_k, weight`.
pub fn write_measure_csv(path: &Path, mu: &DiscreteMeasure) -> Result<()> {
    let k = mu.dim();
    let mut header: Vec<String> = (1..=k).map(|i| format!("coord_{i}")).collect();
    header.push("weight".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(
        path,
        &header,
        mu.iter().map(|(p, w)| {
            let mut row = p.to_vec();
            row.push(w);
            row
        }),
    )
}

pub fn read_measure_csv(path: &Path) -> Result<DiscreteMeasure> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let k = header.len().saturating_sub(1);
    if k == 0 || header.get(k) != Some("weight") {
        return Err(Error::InvalidMeasure(format!("{}: expected coord columns and a weight column", path.display())));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidMeasure(format!("{}: {e}", path.display())))?;
        points.extend_from_slice(&vals[..k]);
        weights.push(vals[k]);
    }
    DiscreteMeasure::new(k, points, weights)
}

/// Reference metadata written next to measure CSVs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureSidecar {
    pub potential: ConvexPotential,
    pub bounds: (f64, f64),
    pub n: usize,
    pub ln_z: f64,
}

impl MeasureSidecar {
    pub fn of(gamma: &ReferenceMeasure) -> Self {
        Self {
            potential: gamma.potential().descriptor().clone(),
            bounds: gamma.bounds(),
            n: gamma.len(),
            ln_z: gamma.log_partition(),
        }
    }
}

/// `stem.csv` plus `stem.json`.
pub fn write_measure_with_sidecar(dir: &Path, stem: &str, mu: &DiscreteMeasure, gamma: &ReferenceMeasure) -> Result<()> {
    write_measure_csv(&dir.join(format!("{stem}.csv")), mu)?;
    write_json(&dir.join(format!("{stem}.json")), &MeasureSidecar::of(gamma))
}

/// Sparse `i, j, mass`.
pub fn write_coupling_csv(path: &Path, coupling: &Coupling) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["i", "j", "mass"])?;
    for &(i, j, m) in coupling.pairs() {
        w.write_record([i.to_string(), j.to_string(), m.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// `t, entropy, w2_increment, evi_max_residual`, one row per step.
pub fn write_trajectory_csv(path: &Path, traj: &FlowTrajectory) -> Result<()> {
    write_table(
        path,
        &["t", "entropy", "w2_increment", "evi_max_residual"],
        (0..traj.len()).map(|k| {
            vec![
                traj.times[k],
                traj.entropies[k],
                traj.w2_increments[k],
                traj.evi_residuals[k],
            ]
        }),
    )
}
