//! CSV tables and the JSON run summary. No timestamps or host details are
//! recorded, so identical commands give byte-identical files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{HarnessError, Result};

/// Serializes rows with a header in field order; quoting follows RFC 4180.
pub fn csv_table<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| HarnessError::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path.display().to_string(), e))
}

pub fn write_stdout(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .and_then(|()| out.flush())
        .map_err(|e| HarnessError::io("<stdout>", e))
}

/// `table.csv` -> `table.summary.json`.
pub fn summary_path(table: &Path) -> PathBuf {
    table.with_extension("summary.json")
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub inputs: serde_json::Value,
    pub seeds: serde_json::Value,
    pub results: serde_json::Value,
}

impl Summary {
    pub fn new(command: &str, inputs: serde_json::Value, seeds: serde_json::Value, results: serde_json::Value) -> Self {
        Summary {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            inputs,
            seeds,
            results,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_json())
    }
}
