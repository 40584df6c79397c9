//! CSV files: trajectories, study reports and two-column plot curves.

use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::Path;

use stiffexp::{TimeMesh, Trajectory};
use thiserror::Error;

use crate::study::{ConvergenceReport, SlopeFit};

pub const TRAJECTORY_HEADER: [&str; 9] = ["t", "W1", "W2", "W3", "W4", "W5", "W6", "Ca", "V"];
pub const REPORT_HEADER: [&str; 10] =
    ["scheme", "order", "h", "e_inf", "e_ta", "e_tr", "e_apd", "cpu_s", "stable", "newton_iters"];

/// Written in place of a slope fitted from fewer than two stable rows.
pub const UNDEFINED: &str = "undefined";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed trajectory file: {0}")]
    Malformed(String),
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn create(path: &Path) -> Result<File, CsvError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}

pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    let dim = traj.dim();
    if dim + 1 == TRAJECTORY_HEADER.len() {
        w.write_record(TRAJECTORY_HEADER)?;
    } else {
        let mut head = vec!["t".to_string()];
        head.extend((1..=dim).map(|i| format!("y{i}")));
        w.write_record(&head)?;
    }
    let mesh = traj.mesh();
    let mut row = Vec::with_capacity(dim + 1);
    for (n, state) in traj.states().enumerate() {
        row.clear();
        row.push(fmt_f64(mesh.node(n)));
        row.extend(state.iter().map(|&v| fmt_f64(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectory(path: &Path, traj: &Trajectory) -> Result<(), CsvError> {
    write_trajectory(create(path)?, traj)
}

/// Reads a trajectory back. The mesh is rebuilt from the first and last
/// time stamps, which must describe a uniform grid.
pub fn read_trajectory<R: Read>(input: R) -> Result<Trajectory, CsvError> {
    let mut r = csv::Reader::from_reader(input);
    let dim = r.headers()?.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| CsvError::Malformed("no state columns".into()))?;
    let mut times = Vec::new();
    let mut data = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(CsvError::Malformed(format!("row {} has {} fields", times.len() + 1, rec.len())));
        }
        let mut vals = rec.iter().map(|f| f.trim().parse::<f64>().map_err(|e| CsvError::Malformed(e.to_string())));
        times.push(vals.next().unwrap()?);
        for v in vals {
            data.push(v?);
        }
    }
    if times.len() < 2 || times[0] != 0.0 {
        return Err(CsvError::Malformed("need at least two rows starting at t = 0".into()));
    }
    let mesh = TimeMesh::new(*times.last().unwrap(), times.len() - 1);
    let h = mesh.step_size();
    if times.iter().enumerate().any(|(n, &t)| (t - mesh.node(n)).abs() > 1e-9 * h.max(t.abs())) {
        return Err(CsvError::Malformed("time stamps are not uniform".into()));
    }
    Ok(Trajectory::from_flat(mesh, dim, data))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, CsvError> {
    read_trajectory(File::open(path)?)
}

pub fn write_report<W: Write>(out: W, report: &ConvergenceReport) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for row in &report.rows {
        w.write_record([
            row.scheme.family().label().to_string(),
            row.scheme.order().to_string(),
            fmt_f64(row.h),
            fmt_opt(row.e_inf),
            fmt_opt(row.e_ta),
            fmt_opt(row.e_tr),
            fmt_opt(row.e_apd),
            fmt_opt(row.cpu_s),
            row.stable.to_string(),
            row.newton_iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_report(path: &Path, report: &ConvergenceReport) -> Result<(), CsvError> {
    write_report(create(path)?, report)
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map(|v| format!("{v:.4}")).unwrap_or_else(|| UNDEFINED.to_string())
}

pub fn write_slopes<W: Write>(out: W, slopes: &[SlopeFit]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "order", "stable_rows", "slope_e_inf", "slope_e_ta", "slope_e_tr"])?;
    for s in slopes {
        w.write_record([
            s.scheme.family().label().to_string(),
            s.scheme.order().to_string(),
            s.stable_rows.to_string(),
            fmt_slope(s.e_inf),
            fmt_slope(s.e_ta),
            fmt_slope(s.e_tr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_slopes(path: &Path, slopes: &[SlopeFit]) -> Result<(), CsvError> {
    write_slopes(create(path)?, slopes)
}

/// Two-column curve `x,y`.
pub fn save_curve(path: &Path, header: [&str; 2], points: &[(f64, f64)]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for &(x, y) in points {
        w.write_record([fmt_f64(x), fmt_f64(y)])?;
    }
    w.flush()?;
    Ok(())
}

/// A table with one header row, used for the stability matrix.
pub fn save_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_rendering_round_trips() {
        for v in [0.1, -84.573_756_122_260_86, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 1.0 / 3.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn trajectory_round_trip_is_bit_exact() {
        let mesh = TimeMesh::new(0.9, 3);
        let states: Vec<Vec<f64>> =
            (0..4).map(|n| (0..8).map(|i| ((n * 8 + i) as f64 * 0.37).sin() / 7.0).collect()).collect();
        let traj = Trajectory::from_states(mesh, &states);
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,W1,W2,W3,W4,W5,W6,Ca,V\n"));
        let back = read_trajectory(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 4);
        let same = back.as_flat().iter().zip(traj.as_flat()).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same);
        assert_eq!(back.mesh().node(3), 0.9);
    }

    #[test]
    fn rejects_ragged_rows() {
        let text = "t,y1\n0,1\n1\n";
        assert!(read_trajectory(text.as_bytes()).is_err());
        let uneven = "t,y1\n0,1\n1,2\n3,4\n";
        assert!(matches!(read_trajectory(uneven.as_bytes()), Err(CsvError::Malformed(_))));
    }
}
