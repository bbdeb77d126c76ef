//! Cross-run comparison straight from log files.

use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};
use crate::logio::{load_log, parse_log_file_name, Manifest};
use crate::summary::{summarize, RunData, Summary};

/// Loads logs, checks they share one objective, and summarizes them.
///
/// Logs written by `run` carry a manifest naming their objective; logs
/// without one can only be compared with each other.
pub fn compare_report(paths: &[PathBuf], thresholds: &[f64]) -> Result<Summary> {
    if paths.is_empty() {
        return Err(CliError::spec("logs", "no log files given"));
    }
    let mut runs: Vec<RunData> = Vec::with_capacity(paths.len());
    let mut reference: Option<(PathBuf, Option<Manifest>)> = None;
    for path in paths {
        let manifest = Manifest::find_for(path)?;
        match &reference {
            None => reference = Some((path.clone(), manifest.clone())),
            Some((first, m0)) => check_same_objective(first, m0.as_ref(), path, manifest.as_ref())?,
        }
        let (method, seed) = parse_log_file_name(path);
        if runs.iter().any(|r| r.method == method && r.seed == seed) {
            return Err(CliError::Log {
                path: path.clone(),
                message: format!("duplicate run for method `{method}` seed {seed}"),
            });
        }
        runs.push(RunData { method, seed, rows: load_log(path)? });
    }
    let l_star = reference.and_then(|(_, m)| m).and_then(|m| m.l_star);
    Ok(summarize(&runs, thresholds, l_star))
}

fn check_same_objective(a: &Path, ma: Option<&Manifest>, b: &Path, mb: Option<&Manifest>) -> Result<()> {
    match (ma, mb) {
        (None, None) => Ok(()),
        (Some(x), Some(y)) if x.objective == y.objective => Ok(()),
        (Some(x), Some(y)) => Err(CliError::ObjectiveMismatch(format!(
            "{} was produced on {:?} but {} on {:?}",
            a.display(),
            x.objective,
            b.display(),
            y.objective
        ))),
        _ => Err(CliError::ObjectiveMismatch(format!(
            "only one of {} and {} has a manifest, so their objectives cannot be matched",
            a.display(),
            b.display()
        ))),
    }
}

/// Human-readable table for the terminal.
pub fn render_table(summary: &Summary) -> String {
    let header = summary.header();
    let records = summary.records();
    let widths: Vec<usize> = (0..header.len())
        .map(|j| records.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    for r in &records {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}
