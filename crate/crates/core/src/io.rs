//! CSV and JSON artifacts. CSV files are RFC 4180 with a header row and `.`
//! as decimal separator.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::path::{Control, TimeGrid, Trajectory};
use crate::Scalar;

fn fmt<S: Scalar>(x: S) -> String {
    format!("{:e}", x.f64())
}

/// Columns `t, c0, …, c{m−1}`, one row per node.
pub fn write_trajectory_csv<S: Scalar>(path: &Path, traj: &Trajectory<S>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..traj.dim).map(|k| format!("c{k}")));
    w.write_record(&header)?;
    for (i, s) in traj.iter().enumerate() {
        let mut rec = vec![fmt(traj.grid.node(i))];
        rec.extend(s.iter().map(|&x| fmt(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_trajectory_csv`].
pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let dim = r.headers()?.len().saturating_sub(1);
    let mut times = Vec::new();
    let mut states = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidParameter(format!("bad number {s:?}: {e}"))))
            .collect::<Result<_>>()?;
        times.push(vals[0]);
        states.extend_from_slice(&vals[1..]);
    }
    if times.len() < 2 {
        return Err(Error::InvalidParameter("trajectory needs at least two nodes".into()));
    }
    let grid = TimeGrid::new(*times.last().expect("nonempty"), times.len() - 1)?;
    Ok(Trajectory { grid, dim, states })
}

/// Columns `t_start, t_end, psi0, …`, one row per cell.
pub fn write_control_csv<S: Scalar>(path: &Path, psi: &Control<S>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t_start".to_string(), "t_end".to_string()];
    header.extend((0..psi.noise_dim).map(|k| format!("psi{k}")));
    w.write_record(&header)?;
    for i in 0..psi.grid.steps {
        let mut rec = vec![fmt(psi.grid.node(i)), fmt(psi.grid.node(i + 1))];
        rec.extend(psi.cell(i).iter().map(|&x| fmt(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format path dump `path, t, c0, …` for a set of trajectories.
pub fn write_paths_csv<S: Scalar>(path: &Path, trajs: &[Trajectory<S>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = trajs.first().map_or(0, |t| t.dim);
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend((0..dim).map(|k| format!("c{k}")));
    w.write_record(&header)?;
    for (p, traj) in trajs.iter().enumerate() {
        for (i, s) in traj.iter().enumerate() {
            let mut rec = vec![p.to_string(), fmt(traj.grid.node(i))];
            rec.extend(s.iter().map(|&x| fmt(x)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per element, header from the field names.
pub fn write_table_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_roundtrip() {
        let dir = std::env::temp_dir().join(format!("critvar-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let t = Trajectory::from_fn(grid, 2, |s: f64| vec![s.exp(), -s / 3.0]);
        let p = dir.join("t.csv");
        write_trajectory_csv(&p, &t).unwrap();
        let back = read_trajectory_csv(&p).unwrap();
        assert_eq!(back, t);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
