//! Tabular experiment output and its CSV form.
//!
//! A report is a comment line `# seed=<seed> version=<version>`, optional
//! `# key=value` metadata lines, a header row and data rows. Floats are
//! written with 17 significant digits so every value parses back exactly.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    /// Value not applicable for this row; written as an empty field.
    Missing,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Missing, Into::into)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v:.16e}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Missing => Ok(()),
        }
    }
}

impl Cell {
    fn parse(field: &str) -> Cell {
        if field.is_empty() {
            return Cell::Missing;
        }
        if let Ok(v) = field.parse::<i64>() {
            return Cell::Int(v);
        }
        let numeric = field.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+');
        match field.parse::<f64>() {
            Ok(v) if numeric && v.is_finite() => Cell::Float(v),
            _ => Cell::Text(field.to_owned()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub seed: u64,
    pub version: String,
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

fn check_text(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.contains([',', '\n', '\r', '"']) {
        return Err(Error::InvalidParameter(format!(
            "{what} {s:?} cannot be written unquoted"
        )));
    }
    Ok(())
}

impl ExperimentReport {
    pub fn new(seed: u64, columns: &[&str]) -> Self {
        ExperimentReport {
            seed,
            version: crate::VERSION.to_owned(),
            metadata: Vec::new(),
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn add_metadata(&mut self, key: &str, value: impl fmt::Display) -> Result<()> {
        let value = value.to_string();
        if key.is_empty() || key.contains(['=', ' ']) || value.contains(['\n', '\r']) {
            return Err(Error::InvalidParameter(format!("bad metadata entry {key:?}={value:?}")));
        }
        self.metadata.push((key.to_owned(), value));
        Ok(())
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Appends a row; rejects wrong arity, NaN or infinite floats, and text
    /// that would need quoting.
    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        for (cell, col) in row.iter().zip(&self.columns) {
            match cell {
                Cell::Float(v) if !v.is_finite() => {
                    return Err(Error::InvalidParameter(format!("non-finite value {v} in column {col}")));
                }
                Cell::Text(s) => check_text(s, "cell")?,
                _ => {}
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// All values of a numeric column, `None` for missing or text cells.
    pub fn numeric_column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.column(name)?;
        Some(self.rows.iter().map(|r| r[i].as_f64()).collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(e.to_string());
        writeln!(out, "# seed={} version={}", self.seed, self.version).map_err(io)?;
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}={v}").map_err(io)?;
        }
        writeln!(out, "{}", self.columns.join(",")).map_err(io)?;
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(ToString::to_string).collect();
            writeln!(out, "{}", line.join(",")).map_err(io)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidParameter(format!("malformed report: {msg}"));
        let mut lines = text.lines();
        let first = lines.next().ok_or_else(|| bad("empty input"))?;
        let first = first.strip_prefix("# ").ok_or_else(|| bad("missing seed line"))?;
        let mut seed = None;
        let mut version = None;
        for part in first.split(' ') {
            match part.split_once('=') {
                Some(("seed", v)) => seed = v.parse().ok(),
                Some(("version", v)) => version = Some(v.to_owned()),
                _ => return Err(bad("unexpected field in seed line")),
            }
        }
        let mut report = ExperimentReport {
            seed: seed.ok_or_else(|| bad("seed"))?,
            version: version.ok_or_else(|| bad("version"))?,
            metadata: Vec::new(),
            columns: Vec::new(),
            rows: Vec::new(),
        };
        let mut header = None;
        for line in lines.by_ref() {
            if let Some(meta) = line.strip_prefix("# ") {
                let (k, v) = meta.split_once('=').ok_or_else(|| bad("metadata line"))?;
                report.metadata.push((k.to_owned(), v.to_owned()));
            } else {
                header = Some(line);
                break;
            }
        }
        let header = header.ok_or_else(|| bad("missing header"))?;
        report.columns = header.split(',').map(str::to_owned).collect();
        for line in lines {
            let row: Vec<Cell> = line.split(',').map(Cell::parse).collect();
            report.push_row(row)?;
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv(&mut out)?;
        out.flush().map_err(|e| Error::Io(e.to_string()))
    }
}
