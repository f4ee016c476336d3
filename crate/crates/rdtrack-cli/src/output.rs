//! CSV and JSON writers and readers. CSV files start with a `# manifest`
//! comment line holding the run manifest as JSON.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::{CliError, RunManifest};

const MANIFEST_PREFIX: &str = "# manifest ";

/// Round-trip formatting with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a CSV table preceded by the manifest comment line.
pub fn write_csv(path: &Path, manifest: &RunManifest, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let manifest_json = serde_json::to_string(manifest).expect("serializable manifest");
    writeln!(out, "{MANIFEST_PREFIX}{manifest_json}").map_err(|e| CliError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::format(path, e);
    writer.write_record(header).map_err(csv_err)?;
    for row in rows {
        writer.write_record(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

/// Writes pretty-printed JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::format(path, e))?;
    writeln!(out).map_err(|e| CliError::io(path, e))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

/// A CSV table read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub manifest: Option<RunManifest>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parses column `col` of every row as `f64`.
    pub fn floats(&self, col: usize) -> Result<Vec<f64>, String> {
        self.rows
            .iter()
            .map(|row| row.get(col).ok_or_else(|| "short row".to_string()).and_then(|v| v.parse::<f64>().map_err(|e| format!("{v:?}: {e}"))))
            .collect()
    }
}

/// Reads a CSV file written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<CsvTable, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let manifest = match text.lines().next().and_then(|l| l.strip_prefix(MANIFEST_PREFIX)) {
        Some(json) => Some(serde_json::from_str(json).map_err(|e| CliError::format(path, e))?),
        None => None,
    };
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CliError::format(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::format(path, e))?;
        rows.push(record.iter().map(String::from).collect());
    }
    Ok(CsvTable { manifest, header, rows })
}

/// `"0 1 3"` for a list of indices.
pub fn join_indices(indices: &[usize]) -> String {
    indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}
