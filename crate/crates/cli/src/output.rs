// SPDX-License-Identifier: Apache-2.0

//! Tables, CSV rendering and artifact files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;

/// Bumped whenever a column or JSON key changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // 15 significant digits
            Cell::Num(x) => format!("{x:.14e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Int(b as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// CSV text headed by a comment line carrying the config hash.
    pub fn to_csv(&self, subcommand: &str, hash: &str) -> String {
        let mut out = format!("# cgolab schema={SCHEMA_VERSION} subcommand={subcommand} config_hash={hash}\n");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Lattice frequency as `a;b;c` in units of the frequency spacing.
pub fn k_label(k: &[f64], dk: f64) -> String {
    let parts: Vec<String> = k.iter().map(|c| format!("{}", (c / dk).round() as i64)).collect();
    parts.join(";")
}

#[derive(Serialize)]
struct Versions {
    cgolab: &'static str,
    cgolab_cli: &'static str,
}

#[derive(Serialize)]
struct Document<'a> {
    schema_version: u32,
    subcommand: &'a str,
    config_hash: &'a str,
    seed: u64,
    versions: Versions,
    wall_time_seconds: f64,
    threads: usize,
    config: &'a ExperimentConfig,
    columns: &'a [&'static str],
    diagnostics: &'a Value,
}

pub struct Artifacts {
    pub csv: Option<(PathBuf, String)>,
    pub json: Option<(PathBuf, String)>,
}

/// Renders every requested file in memory; nothing touches the disk here.
pub fn render(
    cfg: &ExperimentConfig,
    subcommand: &str,
    table: &Table,
    diagnostics: &Value,
    wall_time_seconds: f64,
) -> Artifacts {
    let hash = cfg.hash();
    let stem = cfg.output.stem.clone().unwrap_or_else(|| subcommand.to_string());
    let dir = &cfg.output.dir;
    let csv = cfg
        .output
        .format
        .csv()
        .then(|| (dir.join(format!("{stem}.csv")), table.to_csv(subcommand, &hash)));
    let json = cfg.output.format.json().then(|| {
        let doc = Document {
            schema_version: SCHEMA_VERSION,
            subcommand,
            config_hash: &hash,
            seed: cfg.seed,
            versions: Versions {
                cgolab: cgolab::VERSION,
                cgolab_cli: env!("CARGO_PKG_VERSION"),
            },
            wall_time_seconds,
            threads: rayon::current_num_threads(),
            config: cfg,
            columns: &table.columns,
            diagnostics,
        };
        let text = serde_json::to_string_pretty(&doc).expect("diagnostics serialize");
        (dir.join(format!("{stem}.json")), text + "\n")
    });
    Artifacts { csv, json }
}

impl Artifacts {
    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (path, text) in [&self.csv, &self.json].into_iter().flatten() {
            fs::write(path, text)?;
            written.push(path.clone());
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_fifteen_digits() {
        assert_eq!(Cell::Num(1.0 / 3.0).render(), "3.33333333333333e-1");
        assert_eq!(Cell::Num(0.0).render(), "0.00000000000000e0");
        assert_eq!(Cell::from(true).render(), "1");
    }

    #[test]
    fn csv_has_hash_header() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.5.into(), "x".into()]);
        let text = t.to_csv("recover", "abc");
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with('#') && lines[0].contains("config_hash=abc"));
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines[2], "1.50000000000000e0,x");
    }

    #[test]
    fn k_labels_use_lattice_units() {
        assert_eq!(k_label(&[0.0, -2.0, 1.0], 1.0), "0;-2;1");
    }
}
