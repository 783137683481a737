//! Output directory layout: manifest, CSV tables, JSON summaries, field files.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use congestion_core::estimator::{EstimateSeries, SnapshotRow, SERIES_COLUMNS};
use congestion_core::grid::{write_field_binary, ScalarField};

use crate::CliError;

pub const MANIFEST: &str = "MANIFEST.json";
pub const CONFIG_COPY: &str = "config.toml";

/// Completeness record of an output directory. Written with `complete = false`
/// before any other file and rewritten at the end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub complete: bool,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(dir.join(MANIFEST))
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", dir.join(MANIFEST).display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("bad {MANIFEST} in {}: {e}", dir.display())))
    }
}

/// Writer for one output directory that tracks every file it creates.
pub struct OutputDir {
    root: PathBuf,
    manifest: Manifest,
}

impl OutputDir {
    pub fn create(root: &Path, command: &str, config_hash: &str) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io_error(root, e))?;
        let out = Self {
            root: root.to_path_buf(),
            manifest: Manifest {
                command: command.into(),
                config_hash: config_hash.into(),
                complete: false,
                files: Vec::new(),
                failures: Vec::new(),
            },
        };
        out.write_manifest()?;
        Ok(out)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_manifest(&self) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        let path = self.root.join(MANIFEST);
        fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))
    }

    fn register(&mut self, rel: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        if !self.manifest.files.iter().any(|f| f == rel) {
            self.manifest.files.push(rel.to_string());
        }
        Ok(path)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<(), CliError> {
        let path = self.register(rel)?;
        fs::write(&path, text).map_err(|e| io_error(&path, e))
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.write_text(rel, &(to_json(value) + "\n"))
    }

    pub fn write_field(&mut self, rel: &str, field: &ScalarField) -> Result<(), CliError> {
        let path = self.register(rel)?;
        let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        write_field_binary(field, BufWriter::new(file)).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    pub fn write_table(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        self.write_text(rel, &table_text(header, rows))
    }

    pub fn add_failure(&mut self, failure: String) {
        self.manifest.failures.push(failure);
    }

    /// Marks the directory complete unless failures were recorded.
    pub fn finish(mut self) -> Result<Manifest, CliError> {
        self.manifest.files.sort();
        self.manifest.complete = self.manifest.failures.is_empty();
        self.write_manifest()?;
        Ok(self.manifest)
    }
}

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

/// Shortest text that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn table_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

pub fn series_rows(series: &EstimateSeries) -> Vec<Vec<String>> {
    series.rows.iter().map(|r| r.values().iter().map(|&v| num(v)).collect()).collect()
}

pub fn series_text(series: &EstimateSeries) -> String {
    table_text(&SERIES_COLUMNS, &series_rows(series))
}

/// Parses a series table written by [`series_text`]; columns must match exactly.
pub fn parse_series(text: &str) -> Result<EstimateSeries, String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(SERIES_COLUMNS.iter().copied()) {
        return Err("series columns do not match the documented layout".into());
    }
    let mut series = EstimateSeries::default();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let values = record
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| format!("row {}: {e}", line + 1))?;
        let row = SnapshotRow::from_values(&values).ok_or_else(|| format!("row {}: wrong column count", line + 1))?;
        series.push(row);
    }
    Ok(series)
}

/// File-name friendly rendering of an exponent: `40`, `2.5` -> `2p5`.
pub fn gamma_tag(gamma: f64) -> String {
    num(gamma).trim_end_matches(".0").replace('.', "p")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_tags() {
        assert_eq!(gamma_tag(40.0), "40");
        assert_eq!(gamma_tag(2.5), "2p5");
    }

    #[test]
    fn series_text_round_trips_exactly() {
        let mut values = [0.0; 21];
        for (i, v) in values.iter_mut().enumerate() {
            *v = (i as f64 + 0.1).sqrt() * 1e-7;
        }
        values[19] = f64::INFINITY;
        let mut series = EstimateSeries::default();
        series.push(SnapshotRow::from_values(&values).unwrap());
        let back = parse_series(&series_text(&series)).unwrap();
        assert_eq!(back.rows[0].values().map(f64::to_bits), series.rows[0].values().map(f64::to_bits));
    }
}
