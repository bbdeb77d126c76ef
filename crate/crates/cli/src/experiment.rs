//! Runs every (method, seed) pair of a spec and writes the output tree:
//!
//! ```text
//! <out>/logs/<method>__s<seed>.csv
//! <out>/logs/manifest.json
//! <out>/summary.csv
//! <out>/summary.json
//! <out>/plots/loss.svg
//! <out>/plots/validation.svg
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sharpzo::driver::{self, RunLog};

use crate::error::{CliError, Result};
use crate::logio::{log_file_name, write_atomic, write_log, Manifest, ManifestEntry, MANIFEST};
use crate::plot::{bands, render, Series};
use crate::spec::ExperimentSpec;
use crate::summary::{group_by_method, summarize, RunData, Summary};

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub summary: Summary,
    pub log_files: Vec<PathBuf>,
    pub summary_csv: PathBuf,
    pub summary_json: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// `jobs = 0` uses rayon's default thread count.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path, jobs: usize) -> Result<ExperimentOutput> {
    let objective = spec.objective.build()?;
    let pairs: Vec<(usize, u64)> =
        (0..spec.methods.len()).flat_map(|m| spec.seeds.iter().map(move |&s| (m, s))).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::io(out, std::io::Error::other(e)))?;
    let logs: Vec<RunLog> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(m, seed)| {
                let method = &spec.methods[m];
                driver::run(&spec.config_for(method, seed), objective.as_ref())
                    .map_err(|source| CliError::Run { method: method.name.clone(), seed, source })
            })
            .collect::<Result<_>>()
    })?;

    // Every run succeeded; only now touch the output directory.
    let log_dir = out.join("logs");
    let plot_dir = out.join("plots");
    for dir in [&log_dir, &plot_dir] {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.as_path(), e))?;
    }

    let mut runs = Vec::with_capacity(logs.len());
    let mut entries = Vec::with_capacity(logs.len());
    let mut log_files = Vec::with_capacity(logs.len());
    for (&(m, seed), log) in pairs.iter().zip(&logs) {
        let method = &spec.methods[m];
        let file = log_file_name(&method.name, seed);
        let mut bytes = Vec::new();
        write_log(&log.rows, &mut bytes).map_err(|e| CliError::io(log_dir.join(&file), e))?;
        let path = log_dir.join(&file);
        write_atomic(&path, &bytes)?;
        log_files.push(path);
        entries.push(ManifestEntry {
            file,
            method: method.name.clone(),
            variant: method.variant.to_string(),
            seed,
            t_c: log.t_c,
            config: spec.config_for(method, seed),
        });
        runs.push(RunData { method: method.name.clone(), seed, rows: log.rows.clone() });
    }

    let l_star = objective.optimum();
    let manifest = Manifest { objective: spec.objective.clone(), l_star, runs: entries };
    let manifest_json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&log_dir.join(MANIFEST), &manifest_json)?;

    let summary = summarize(&runs, &spec.thresholds, l_star);
    let summary_csv = out.join("summary.csv");
    let summary_json = out.join("summary.json");
    write_atomic(&summary_csv, &summary.to_csv())?;
    write_atomic(&summary_json, &summary.to_json())?;

    let plots = write_plots(&runs, l_star, &plot_dir, spec.objective.name())?;
    Ok(ExperimentOutput { summary, log_files, summary_csv, summary_json, plots })
}

pub fn write_plots(runs: &[RunData], l_star: Option<f64>, dir: &Path, objective: &str) -> Result<Vec<PathBuf>> {
    let groups = group_by_method(runs);
    let loss_label = if l_star.is_some() { "train loss - L*" } else { "train loss" };
    let charts = [
        ("loss.svg", Series::Loss, loss_label, true),
        ("validation.svg", Series::Validation, "validation metric", false),
    ];
    let mut paths = Vec::new();
    for (file, series, label, log_axis) in charts {
        let svg = render(&bands(&groups, series, l_star), &format!("{objective}: {label} vs queries"), label, log_axis);
        let path = dir.join(file);
        write_atomic(&path, svg.as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}
