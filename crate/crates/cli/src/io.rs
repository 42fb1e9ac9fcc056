//! File formats: JSON models and reports, CSV trajectories and direction
//! tables. Reals are written with 17 significant digits.

use std::fs;
use std::path::Path;

use minimax_core::{TimeGrid, Trajectory};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Relative tolerance for recognising a uniform time column.
const GRID_TOL: f64 = 1e-9;

/// `1.2345678901234567e-1` style: 17 significant digits, exact round trip.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_real(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Input(format!("not a number: '{s}'")))
}

/// Row-major nested arrays.
pub type MatrixRows = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> MatrixRows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Builds a matrix from row-major nested arrays; `cols` disambiguates
/// empty rows.
pub fn from_rows(name: &str, rows: &MatrixRows, cols: Option<usize>) -> Result<DMatrix<f64>> {
    let ncols = cols.or_else(|| rows.first().map(Vec::len)).unwrap_or(0);
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(CliError::Input(format!(
            "{name}: row {i} has {} entries, expected {ncols}",
            row.len()
        )));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(CliError::Input(format!("{name}: entries must be finite")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Input(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Header `t,v1,...,vn`, one node per row.
pub fn trajectory_csv(tr: &Trajectory) -> String {
    let mut out = String::from("t");
    for j in 1..=tr.dim() {
        out.push_str(&format!(",v{j}"));
    }
    out.push('\n');
    for (i, v) in tr.values().iter().enumerate() {
        out.push_str(&fmt_real(tr.grid().node(i)));
        for x in v.iter() {
            out.push(',');
            out.push_str(&fmt_real(*x));
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory(path: &Path, tr: &Trajectory) -> Result<()> {
    write_text(path, &trajectory_csv(tr))
}

/// Reads a trajectory CSV; the time column must be a uniform grid.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.get(0) != Some("t") || headers.len() < 2 {
        return Err(CliError::Input(format!(
            "{}: expected header 't,v1,...,vn'",
            path.display()
        )));
    }
    let dim = headers.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        times.push(parse_real(&record[0])?);
        let v = record.iter().skip(1).map(parse_real).collect::<Result<Vec<_>>>()?;
        values.push(DVector::from_vec(v));
    }
    if times.len() < 3 {
        return Err(CliError::Input(format!(
            "{}: need at least 3 time nodes, found {}",
            path.display(),
            times.len()
        )));
    }
    let grid = TimeGrid::new(times[0], *times.last().unwrap(), times.len() - 1)?;
    let span = (grid.t_end() - grid.t0()).abs();
    if let Some(i) = (0..times.len()).find(|&i| (times[i] - grid.node(i)).abs() > GRID_TOL * span) {
        return Err(CliError::Input(format!(
            "{}: time column is not uniform at row {}",
            path.display(),
            i + 1
        )));
    }
    Ok(Trajectory::new(grid, dim, values)?)
}

/// A table of named vectors: header `name,v1,...,vn`.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedVectors {
    pub names: Vec<String>,
    pub vectors: Vec<DVector<f64>>,
}

pub fn read_named_vectors(path: &Path) -> Result<NamedVectors> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.get(0) != Some("name") || headers.len() < 2 {
        return Err(CliError::Input(format!(
            "{}: expected header 'name,v1,...,vn'",
            path.display()
        )));
    }
    let mut table = NamedVectors {
        names: Vec::new(),
        vectors: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        table.names.push(record[0].to_string());
        let v = record.iter().skip(1).map(parse_real).collect::<Result<Vec<_>>>()?;
        table.vectors.push(DVector::from_vec(v));
    }
    Ok(table)
}

/// Header `v1,...,vk` and one data row.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows = reader.records();
    let record = match rows.next() {
        Some(r) => r.map_err(|e| csv_err(path, e))?,
        None => return Err(CliError::Input(format!("{}: no data row", path.display()))),
    };
    if rows.next().is_some() {
        return Err(CliError::Input(format!("{}: expected a single data row", path.display())));
    }
    Ok(DVector::from_vec(record.iter().map(parse_real).collect::<Result<Vec<_>>>()?))
}

pub fn vector_csv(v: &DVector<f64>) -> String {
    let header: Vec<String> = (1..=v.len()).map(|j| format!("v{j}")).collect();
    let row: Vec<String> = v.iter().map(|x| fmt_real(*x)).collect();
    format!("{}\n{}\n", header.join(","), row.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_formatting_round_trips_exactly() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0, -0.0] {
            let s = fmt_real(x);
            assert_eq!(parse_real(&s).unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_real(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let grid = TimeGrid::new(0.0, 0.7, 7).unwrap();
        let tr = Trajectory::from_fn(grid, 2, |t| DVector::from_vec(vec![t.sin(), (3.0 * t).exp()])).unwrap();
        write_trajectory(&path, &tr).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn rejects_non_uniform_time_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_text(&path, "t,v1\n0,1\n0.5,1\n0.6,1\n1,1\n").unwrap();
        assert!(matches!(read_trajectory(&path), Err(CliError::Input(_))));
    }

    #[test]
    fn ragged_matrix_is_an_input_error() {
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(from_rows("F", &rows, None), Err(CliError::Input(_))));
        let empty = from_rows("C2", &vec![vec![], vec![]], Some(0)).unwrap();
        assert_eq!(empty.shape(), (2, 0));
    }

    #[test]
    fn named_vectors_parse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_text(&path, "name,v1,v2\ne1,1,0\nmix, 0.5 ,-2\n").unwrap();
        let t = read_named_vectors(&path).unwrap();
        assert_eq!(t.names, ["e1", "mix"]);
        assert_eq!(t.vectors[1], DVector::from_vec(vec![0.5, -2.0]));
    }
}
