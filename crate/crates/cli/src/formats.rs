//! Field files. Every CSV starts with a `# run_id=...` comment line, then a
//! header; floats use the shortest representation that round-trips.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dwlab_core::{ComplexPair, Grid, WallProfile};
use num_complex::Complex64;

use crate::CliError;

pub const PROFILE_HEADER: [&str; 3] = ["x", "u1", "u2"];
pub const STATE_HEADER: [&str; 5] = ["x", "re1", "im1", "re2", "im2"];

/// Writes a CSV with the run-id line and the given header.
pub fn write_csv(path: &Path, run_id: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# run_id={run_id}").map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(|e| CliError::csv(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Header and numeric rows of a CSV written by [`write_csv`].
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub run_id: Option<String>,
}

pub fn read_csv(path: &Path) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let run_id = text.lines().next().and_then(|l| l.strip_prefix("# run_id=")).map(str::to_string);
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| CliError::csv(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| CliError::Validation(format!("{}: bad number {s:?}", path.display()))))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows, run_id })
}

/// Recovers the grid from the `x` column and checks its spacing.
fn grid_of(path: &Path, rows: &[Vec<f64>]) -> Result<Grid, CliError> {
    let n = rows.len();
    if n < 3 {
        return Err(CliError::Validation(format!("{}: too few rows", path.display())));
    }
    let l = -rows[0][0];
    let grid = Grid::new(l, n)?;
    for (i, row) in rows.iter().enumerate() {
        if (row[0] - grid.x(i)).abs() > 1e-9 * l.max(1.0) {
            return Err(CliError::Validation(format!("{}: x column is not a uniform grid on [-L, L]", path.display())));
        }
    }
    Ok(grid)
}

fn check_header(path: &Path, t: &Table, want: &[&str]) -> Result<(), CliError> {
    if t.header.iter().map(String::as_str).ne(want.iter().copied()) {
        return Err(CliError::Validation(format!("{}: expected columns {}", path.display(), want.join(","))));
    }
    Ok(())
}

pub fn write_profile(path: &Path, run_id: &str, p: &WallProfile) -> Result<(), CliError> {
    let g = p.grid;
    write_csv(path, run_id, &PROFILE_HEADER, (0..g.len()).map(|i| vec![g.x(i), p.u1[i], p.u2[i]]))
}

pub fn read_profile(path: &Path, gamma: f64) -> Result<WallProfile, CliError> {
    let t = read_csv(path)?;
    check_header(path, &t, &PROFILE_HEADER)?;
    let grid = grid_of(path, &t.rows)?;
    let col = |j: usize| t.rows.iter().map(|r| r[j]).collect();
    Ok(WallProfile::from_values(grid, gamma, col(1), col(2))?)
}

pub fn write_state(path: &Path, run_id: &str, psi: &ComplexPair) -> Result<(), CliError> {
    let g = psi.grid;
    write_csv(
        path,
        run_id,
        &STATE_HEADER,
        (0..g.len()).map(|i| vec![g.x(i), psi.psi1[i].re, psi.psi1[i].im, psi.psi2[i].re, psi.psi2[i].im]),
    )
}

/// Reads a complex state, or a real profile file as the state `U + 0i`.
pub fn read_state(path: &Path) -> Result<ComplexPair, CliError> {
    let t = read_csv(path)?;
    let grid = grid_of(path, &t.rows)?;
    if t.header.len() == PROFILE_HEADER.len() {
        check_header(path, &t, &PROFILE_HEADER)?;
        let c = |j: usize| t.rows.iter().map(|r| Complex64::new(r[j], 0.0)).collect();
        return Ok(ComplexPair::new(grid, c(1), c(2))?);
    }
    check_header(path, &t, &STATE_HEADER)?;
    let c = |j: usize| t.rows.iter().map(|r| Complex64::new(r[j], r[j + 1])).collect();
    Ok(ComplexPair::new(grid, c(1), c(3))?)
}
