//! Tabular results and their CSV form.
//!
//! The CSV starts with `#`-prefixed metadata lines (claim, anchor, seed,
//! version) followed by one header row and the data rows. Nothing in the CSV
//! depends on wall-clock time, so a fixed seed reproduces it byte for byte;
//! timing and the source revision go to a JSON sidecar instead.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            // shortest representation that round-trips
            Cell::Real(x) => write!(f, "{x:?}"),
            Cell::Text(s) if s.contains([',', '"', '\n']) => write!(f, "\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResultTable {
    /// Short name of the property being tested.
    pub claim: String,
    /// Descriptive anchor of the statement behind the claim.
    pub anchor: String,
    pub seed: u64,
    pub version: String,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(claim: &str, anchor: &str, seed: u64, columns: &[&str]) -> Self {
        ResultTable {
            claim: claim.into(),
            anchor: anchor.into(),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    /// Appends a row; its length must match the schema.
    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::invalid(format!(
                "row has {} cells, table '{}' has {} columns",
                row.len(),
                self.claim,
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# claim: {}", self.claim).unwrap();
        writeln!(s, "# anchor: {}", self.anchor).unwrap();
        writeln!(s, "# seed: {}", self.seed).unwrap();
        writeln!(s, "# version: {}", self.version).unwrap();
        writeln!(s, "{}", self.columns.join(",")).unwrap();
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| c.to_string()).collect();
            writeln!(s, "{}", cells.join(",")).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
    }
}

/// Run metadata that is allowed to differ between runs.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub claim: String,
    pub anchor: String,
    pub seed: u64,
    pub version: String,
    pub git_describe: String,
    pub wall_seconds: f64,
    pub threads: usize,
    pub reduction: String,
}

impl RunMeta {
    pub fn new(table: &ResultTable, wall_seconds: f64, reduction: &str) -> Self {
        RunMeta {
            claim: table.claim.clone(),
            anchor: table.anchor.clone(),
            seed: table.seed,
            version: table.version.clone(),
            git_describe: git_describe(),
            wall_seconds,
            threads: rayon::current_num_threads(),
            reduction: reduction.into(),
        }
    }

    /// Writes `<out>.meta.json` next to `out`.
    pub fn write_beside(&self, out: &Path) -> Result<()> {
        let mut name = out.as_os_str().to_owned();
        name.push(".meta.json");
        let path = Path::new(&name);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Numeric(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
    }
}

/// `git describe --always --dirty` of the working directory, or `unknown`.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = ResultTable::new("demo", "mass conservation", 7, &["t", "name", "ok"]);
        t.push(vec![0.1.into(), "a,b".into(), true.into()]).unwrap();
        t.push(vec![Cell::Real(1e-300), "x".into(), 0usize.into()]).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# claim: demo");
        assert_eq!(lines[2], "# seed: 7");
        assert_eq!(lines[4], "t,name,ok");
        assert_eq!(lines[5], "0.1,\"a,b\",1");
        assert_eq!(lines[6], "1e-300,x,0");
    }

    #[test]
    fn reals_round_trip() {
        for x in [0.1 + 0.2, 1.0 / 3.0, 6.02e23, -0.0, 5e-324] {
            let s = Cell::Real(x).to_string();
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn row_width_enforced() {
        let mut t = ResultTable::new("demo", "a", 0, &["a", "b"]);
        assert!(t.push(vec![1usize.into()]).is_err());
        assert!(t.rows().is_empty());
    }

    #[test]
    fn sidecar_written() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.csv");
        let t = ResultTable::new("demo", "a", 3, &["x"]);
        t.write_csv(&out).unwrap();
        RunMeta::new(&t, 1.5, "deterministic").write_beside(&out).unwrap();
        let meta = std::fs::read_to_string(dir.path().join("r.csv.meta.json")).unwrap();
        assert!(meta.contains("\"seed\": 3"));
        assert!(meta.contains("wall_seconds"));
    }
}
