//! Versioned CSV tables: a `# tilebench-v1` comment line, a fixed header, then rows.

use crate::error::{CliError, CliResult};
use std::io::Write;
use std::path::Path;

pub const SCHEMA_LINE: &str = "# tilebench-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{SCHEMA_LINE}")?;
        writeln!(w, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    }

    /// Writes to `path`, or to stdout when no path is given.
    pub fn emit(&self, path: Option<&Path>) -> CliResult<()> {
        match path {
            Some(p) => self.write(std::io::BufWriter::new(std::fs::File::create(p)?))?,
            None => self.write(std::io::stdout().lock())?,
        }
        Ok(())
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(l) if l.trim() == SCHEMA_LINE => {}
            _ => return Err(CliError::Schema(format!("missing `{SCHEMA_LINE}` header line"))),
        }
        let mut lines = lines.filter(|l| !l.starts_with('#'));
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| CliError::Schema("missing column header".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let row: Vec<String> = l.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() != header.len() {
                return Err(CliError::Schema(format!("row {} has {} fields, expected {}", i + 1, row.len(), header.len())));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> CliResult<Vec<f64>> {
        let j = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Schema(format!("no column `{name}` (have {})", self.header.join(", "))))?;
        self.rows
            .iter()
            .map(|r| r[j].parse::<f64>().map_err(|_| CliError::Schema(format!("column `{name}`: `{}` is not a number", r[j]))))
            .collect()
    }
}

/// Shortest round-trip decimal form, so equal values print identically.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
