//! Run-log CSV files and the per-directory manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sharpzo::driver::{RunConfig, StepRow};
use sharpzo::objectives::ObjectiveDescriptor;

use crate::error::{CliError, Result};

pub const COLUMNS: [&str; 8] = ["step", "stage", "queries", "train_loss", "val_metric", "sigma", "active_coords", "wall_ms"];
pub const MANIFEST: &str = "manifest.json";

pub fn log_file_name(method: &str, seed: u64) -> String {
    format!("{method}__s{seed}.csv")
}

/// Splits `<method>__s<seed>.csv`; other names map to `(stem, 0)`.
pub fn parse_log_file_name(path: &Path) -> (String, u64) {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    if let Some((method, seed)) = stem.rsplit_once("__s") {
        if let Ok(seed) = seed.parse() {
            return (method.to_string(), seed);
        }
    }
    (stem.to_string(), 0)
}

pub fn write_log<W: Write>(rows: &[StepRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    // Serializing the struct emits the header from its field names; the
    // schema test pins those to COLUMNS.
    for row in rows {
        w.serialize(row).map_err(csv_io)?;
    }
    if rows.is_empty() {
        w.write_record(COLUMNS).map_err(csv_io)?;
    }
    w.flush()
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Parses a run log, insisting on the exact header and a coherent trajectory.
pub fn read_log(bytes: &[u8]) -> std::result::Result<Vec<StepRow>, String> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = r.headers().map_err(|e| format!("unreadable header: {e}"))?;
    if header.iter().ne(COLUMNS) {
        return Err(format!("header must be `{}`, found `{}`", COLUMNS.join(","), header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows: Vec<StepRow> = Vec::new();
    for (i, rec) in r.deserialize::<StepRow>().enumerate() {
        let row = rec.map_err(|e| format!("row {}: {e}", i + 1))?;
        if row.stage > 2 {
            return Err(format!("row {}: stage {} is not 0, 1 or 2", i + 1, row.stage));
        }
        if let Some(prev) = rows.last() {
            if row.step <= prev.step {
                return Err(format!("row {}: step {} does not increase", i + 1, row.step));
            }
            if row.queries < prev.queries {
                return Err(format!("row {}: cumulative queries decrease", i + 1));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("log has no rows".into());
    }
    Ok(rows)
}

pub fn load_log(path: &Path) -> Result<Vec<StepRow>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    read_log(&bytes).map_err(|message| CliError::Log { path: path.to_path_buf(), message })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub method: String,
    pub variant: String,
    pub seed: u64,
    pub t_c: usize,
    pub config: RunConfig,
}

/// Records which objective produced the logs in a directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub objective: ObjectiveDescriptor,
    pub l_star: Option<f64>,
    pub runs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|message| CliError::Log { path: path.to_path_buf(), message })
    }

    /// The manifest beside `log`, if there is one.
    pub fn find_for(log: &Path) -> Result<Option<Self>> {
        let dir = log.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let path = dir.join(MANIFEST);
        if path.is_file() {
            Self::load(&path).map(Some)
        } else {
            Ok(None)
        }
    }
}

/// Writes via a temp file in the same directory, then renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
