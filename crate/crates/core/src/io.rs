//! Trace CSV, JSON snapshots of `(u_n, w_n, ζ_n)` and JSON reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::Report;
use crate::grid::GridMeta;
use crate::scheme::Trajectory;
use crate::{Field, Result};

pub const TRACE_HEADER: &str = "n,t,energy,mass,dual_step_norm,el_residual";

/// The trace as CSV text with 17 significant digits per value.
pub fn trace_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(64 * traj.len());
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for n in 0..traj.len() {
        let _ = writeln!(
            out,
            "{n},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            traj.times[n], traj.energies[n], traj.masses[n], traj.dual_step_norms[n], traj.el_residuals[n]
        );
    }
    out
}

pub fn write_trace(traj: &Trajectory, path: &Path) -> Result<()> {
    fs::write(path, trace_csv(traj))?;
    Ok(())
}

/// One saved state with its grid header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub grid: GridMeta,
    pub n: usize,
    pub t: f64,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl Snapshot {
    pub fn from_trajectory(traj: &Trajectory, n: usize, grid: GridMeta) -> Self {
        Self {
            grid,
            n,
            t: traj.times[n],
            u: traj.u[n].as_slice().to_vec(),
            w: traj.w[n].as_slice().to_vec(),
            zeta: traj.zeta[n].as_slice().to_vec(),
        }
    }

    pub fn u_field(&self) -> Field {
        Field::from_vec(self.u.clone())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Writes every `stride`-th snapshot (and the last one) as
/// `snapshot_<n>.json` under `dir`; returns the written paths.
pub fn write_snapshots(traj: &Trajectory, grid: &GridMeta, dir: &Path, stride: usize) -> Result<Vec<PathBuf>> {
    if stride == 0 || traj.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir)?;
    let last = traj.len() - 1;
    let mut written = Vec::new();
    for n in (0..traj.len()).filter(|n| n % stride == 0 || *n == last) {
        let path = dir.join(format!("snapshot_{n:05}.json"));
        Snapshot::from_trajectory(traj, n, grid.clone()).write(&path)?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

pub fn write_reports(reports: &[Report], path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(reports)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Check;
    use crate::grid::Grid;

    fn tiny() -> Trajectory {
        let u0 = Field::from_vec(vec![0.1, -0.2, 1.0 / 3.0]);
        Trajectory {
            tau: 0.5,
            times: vec![0.0, 0.5],
            u: vec![u0.clone(), &u0 * 0.5],
            w: vec![Field::zeros(3), Field::from_vec(vec![1e-300, 2.0, -3.5])],
            zeta: vec![Field::zeros(3), Field::zeros(3)],
            energies: vec![1.0, 0.75],
            masses: vec![0.0, 0.0],
            el_residuals: vec![0.0, 1e-12],
            dual_step_norms: vec![0.0, 0.25],
            iterations: vec![0, 4],
        }
    }

    #[test]
    fn csv_has_fixed_header_and_full_precision() {
        let text = trace_csv(&tiny());
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(TRACE_HEADER));
        let row: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
        assert_eq!(row[0], "1");
        assert_eq!(row[1], "5.0000000000000000e-1");
        assert_eq!(row[5].parse::<f64>().unwrap(), 1e-12);
    }

    #[test]
    fn snapshots_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let traj = tiny();
        let meta = Grid::build(1, &[[0.0, 1.0]], 3, 0.0, 1).unwrap().meta();
        let paths = write_snapshots(&traj, &meta, dir.path(), 1).unwrap();
        assert_eq!(paths.len(), 2);
        let back = Snapshot::read(&paths[1]).unwrap();
        assert_eq!(back.u_field(), traj.u[1]);
        assert_eq!(back.w, traj.w[1].as_slice());
        assert_eq!(back.grid, meta);
    }

    #[test]
    fn report_json_is_uppercase_status() {
        let dir = tempfile::tempdir().unwrap();
        let mut report = Report::new("r");
        report.push(Check::at_most("x", 2.0, 1.0));
        let path = dir.path().join("r.json");
        write_report(&report, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"FAIL\""));
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }
}
