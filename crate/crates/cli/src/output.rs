//! Atomic, deterministic report writers.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Output(e.to_string())
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(dir.join(name)).map_err(io)?;
    Ok(())
}

/// Serializes `report`; reports skip absent options, so a `null` can only be a non-finite number.
pub fn write_json<S: Serialize>(dir: &Path, name: &str, report: &S) -> Result<(), CliError> {
    let value = serde_json::to_value(report).map_err(io)?;
    if has_null(&value) {
        return Err(CliError::Numeric("non-finite number in report".into()));
    }
    let mut text = serde_json::to_string_pretty(&value).map_err(io)?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

fn has_null(value: &serde_json::Value) -> bool {
    match value {
        serde_json::Value::Null => true,
        serde_json::Value::Array(a) => a.iter().any(has_null),
        serde_json::Value::Object(o) => o.values().any(has_null),
        _ => false,
    }
}

/// CSV table; `None` cells are left empty.
pub fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(io)?;
    for row in rows {
        let mut rec = Vec::with_capacity(row.len());
        for cell in row {
            rec.push(cell.render()?);
        }
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(io)?;
    write_atomic(dir, name, &bytes)
}

pub enum Cell {
    Text(String),
    Int(usize),
    Num(f64),
    Empty,
}

impl Cell {
    fn render(&self) -> Result<String, CliError> {
        Ok(match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(n) => n.to_string(),
            Cell::Num(x) if x.is_finite() => format!("{x}"),
            Cell::Num(_) => return Err(CliError::Numeric("non-finite number in table".into())),
            Cell::Empty => String::new(),
        })
    }
}
