//! File formats: matrices as headerless row-major CSV, densities as
//! `(grid, value)` CSV, landmarks as `n x 2` CSV, basis families as a JSON
//! manifest naming one matrix CSV per basis.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stiefel_log::manifold::default_feasibility_tol;
use stiefel_log::{Mat, StiefelPoint};

use crate::error::{CliError, CliResult};

fn read_to_string(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Parses a headerless numeric CSV; every row must have the same width.
pub fn parse_matrix_csv(text: &str, path: &Path) -> CliResult<Mat> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| CliError::Parse {
                path: path.to_path_buf(),
                line,
                column: c + 1,
                msg: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(CliError::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: c + 1,
                    msg: "value is not finite".into(),
                });
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CliError::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: row.len().min(first.len()) + 1,
                    msg: format!("row has {} columns, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::input(format!("{}: no data rows", path.display())));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn read_matrix(path: &Path) -> CliResult<Mat> {
    parse_matrix_csv(&read_to_string(path)?, path)
}

/// Reads a point and checks `|X^T X - I|_F` against `tol` (default
/// `1e-12 sqrt(p)`).
pub fn read_point(path: &Path, tol: Option<f64>) -> CliResult<StiefelPoint> {
    let m = read_matrix(path)?;
    if m.ncols() > m.nrows() {
        return Err(CliError::input(format!(
            "{}: a {}x{} matrix cannot have orthonormal columns",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    let tol = tol.unwrap_or_else(|| default_feasibility_tol(m.ncols()));
    StiefelPoint::with_tolerance(m, tol).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Shortest round-trip representation, one row per line.
pub fn format_matrix_csv(m: &Mat) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes to `path`, or to stdout when absent.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e))?;
            out.flush().map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

pub fn write_matrix(path: &Path, m: &Mat) -> CliResult<()> {
    write_text(path, &format_matrix_csv(m))
}

/// A sampled density: the grid must be uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfSamples {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl PdfSamples {
    pub fn spacing(&self) -> f64 {
        (self.grid[self.grid.len() - 1] - self.grid[0]) / (self.grid.len() - 1) as f64
    }
}

pub fn read_pdf(path: &Path) -> CliResult<PdfSamples> {
    let m = read_matrix(path)?;
    if m.ncols() != 2 || m.nrows() < 2 {
        return Err(CliError::input(format!(
            "{}: density files need two columns (grid, value) and at least two rows",
            path.display()
        )));
    }
    let grid: Vec<f64> = m.column(0).iter().copied().collect();
    let values: Vec<f64> = m.column(1).iter().copied().collect();
    let s = PdfSamples { grid, values };
    let h = s.spacing();
    if !(h > 0.0) {
        return Err(CliError::input(format!("{}: grid must be increasing", path.display())));
    }
    for (i, w) in s.grid.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0) {
            return Err(CliError::input(format!(
                "{}: grid is not uniform at row {}",
                path.display(),
                i + 2
            )));
        }
    }
    Ok(s)
}

pub fn format_pdf(grid: &[f64], values: &[f64]) -> String {
    grid.iter().zip(values).map(|(g, v)| format!("{g:?},{v:?}\n")).collect()
}

/// JSON manifest of a basis family. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisManifest {
    pub reference: usize,
    pub bases: Vec<BasisEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisEntry {
    pub param: f64,
    pub file: PathBuf,
}

pub fn read_manifest(path: &Path) -> CliResult<(BasisManifest, Vec<StiefelPoint>)> {
    let man: BasisManifest = serde_json::from_str(&read_to_string(path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let bases = man
        .bases
        .iter()
        .map(|b| read_point(&dir.join(&b.file), None))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((man, bases))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_carry_location() {
        let e = parse_matrix_csv("1,0\n0,x\n", Path::new("a.csv")).unwrap_err();
        match e {
            CliError::Parse { line, column, .. } => assert_eq!((line, column), (2, 2)),
            other => panic!("{other}"),
        }
        let e = parse_matrix_csv("1,0\n0\n", Path::new("a.csv")).unwrap_err();
        assert!(format!("{e}").contains("line 2"));
        assert!(parse_matrix_csv("", Path::new("a.csv")).is_err());
    }

    #[test]
    fn matrix_text_round_trips() {
        let m = Mat::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0));
        let back = parse_matrix_csv(&format_matrix_csv(&m), Path::new("m.csv")).unwrap();
        assert_eq!(m, back);
        let c = parse_matrix_csv("# comment\n 1 , 2\n\n3,4\n", Path::new("c.csv")).unwrap();
        assert_eq!(c, Mat::from_row_slice(2, 2, &[1., 2., 3., 4.]));
    }
}
