//! Matrix, state and schedule files.
//!
//! Matrices are JSON objects `{"rows": r, "cols": c, "entries": [[re, im], ...]}`
//! in row-major order; states are `r x 1` matrices. Floats are written in
//! shortest round-trip form, so reading back is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::applications::StateVector;
use crate::compiler::PhaseSchedule;
use crate::error::{HsvtError, Result};
use crate::numerics::ComplexMatrix;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    rows: usize,
    cols: usize,
    entries: Vec<[f64; 2]>,
}

fn parse_error(line: usize, field: &str, message: impl Into<String>) -> HsvtError {
    HsvtError::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

/// Field named in a serde_json message such as "unknown field `x`" or "missing field `x`".
fn field_of(message: &str) -> &str {
    message
        .split('`')
        .nth(1)
        .filter(|f| !f.is_empty())
        .unwrap_or("document")
}

pub fn matrix_to_json(m: &ComplexMatrix) -> String {
    let file = MatrixFile {
        rows: m.rows(),
        cols: m.cols(),
        entries: m.to_row_major().into_iter().map(|z| [z.re, z.im]).collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("matrix serializes");
    s.push('\n');
    s
}

pub fn matrix_from_json(text: &str) -> Result<ComplexMatrix> {
    let file: MatrixFile = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        parse_error(e.line(), field_of(&msg), msg.clone())
    })?;
    if file.entries.len() != file.rows * file.cols {
        return Err(parse_error(
            1,
            "entries",
            format!(
                "{}x{} matrix needs {} entries, found {}",
                file.rows,
                file.cols,
                file.rows * file.cols,
                file.entries.len()
            ),
        ));
    }
    let entries = file.entries.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
    ComplexMatrix::from_row_major(file.rows, file.cols, entries).map_err(|e| parse_error(1, "entries", e.to_string()))
}

pub fn state_to_json(s: &StateVector) -> String {
    matrix_to_json(&ComplexMatrix::column(s.amplitudes()))
}

pub fn state_from_json(text: &str) -> Result<StateVector> {
    let m = matrix_from_json(text)?;
    if m.cols() != 1 {
        return Err(parse_error(1, "cols", format!("a state must have one column, found {}", m.cols())));
    }
    StateVector::new(m.to_row_major())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HsvtError::Io(format!("{}: {e}", path.display())))
}

pub fn read_matrix(path: &Path) -> Result<ComplexMatrix> {
    matrix_from_json(&read_text(path)?)
}

pub fn read_state(path: &Path) -> Result<StateVector> {
    state_from_json(&read_text(path)?)
}

pub fn read_schedule(path: &Path) -> Result<PhaseSchedule> {
    PhaseSchedule::from_text(&read_text(path)?)
}

pub fn write_matrix(path: &Path, m: &ComplexMatrix) -> Result<()> {
    write_atomic(path, matrix_to_json(m).as_bytes())
}

pub fn write_state(path: &Path, s: &StateVector) -> Result<()> {
    write_atomic(path, state_to_json(s).as_bytes())
}

pub fn write_schedule(path: &Path, s: &PhaseSchedule) -> Result<()> {
    write_atomic(path, s.to_text().as_bytes())
}

/// Writes to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |e: std::io::Error| HsvtError::Io(format!("{}: {e}", path.display()));
    let name = path
        .file_name()
        .ok_or_else(|| HsvtError::Io(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err)
}
