//! CSV output with `#` comment headers.

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

/// One CSV field.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i64),
    Text(String),
}

impl Value {
    fn render(&self) -> String {
        match self {
            // 17 significant digits round-trip every double.
            Value::Real(v) => format!("{v:.16e}"),
            Value::Int(v) => v.to_string(),
            Value::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Int(i64::from(v))
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// Rows under a fixed header. Every row must have one field per column.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match the header");
        self.rows.push(row);
    }

    /// Serializes with each `comments` line prefixed by `# `.
    pub fn to_bytes(&self, comments: &[String]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for c in comments {
            for line in c.lines() {
                out.extend_from_slice(b"# ");
                out.extend_from_slice(line.as_bytes());
                out.push(b'\n');
            }
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Value::render))?;
        }
        w.into_inner().map_err(|e| CliError::invalid(e.to_string()))
    }

    pub fn write(&self, path: &Path, comments: &[String]) -> Result<()> {
        fs::write(path, self.to_bytes(comments)?).map_err(|e| CliError::file(path, e))
    }
}

/// Reads a file written by [`Table::write`], skipping comment lines.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let bytes = fs::read(path).map_err(|e| CliError::file(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes.as_slice());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}
