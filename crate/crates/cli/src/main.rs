use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sharpzo_cli::report::render_table;
use sharpzo_cli::spec::{load_spec, resolve_out_dir};
use sharpzo_cli::{compare_report, run_experiment, verify};

/// Output directory override; `--out` still wins.
const OUT_ENV: &str = "SHARPZO_OUT";

#[derive(Parser)]
#[command(name = "sharpzo", version, about = "Forward-only optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method × seed of a spec file.
    Run {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 means one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Summarize and compare existing run logs.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Train-loss target for queries-to-threshold; repeatable.
        #[arg(long = "threshold")]
        thresholds: Vec<f64>,
        /// Print the JSON summary instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Check estimator exactness and mask sparsity.
    Verify,
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> sharpzo_cli::Result<ExitCode> {
    match command {
        Command::Run { spec, out, jobs } => {
            let parsed = load_spec(&spec)?;
            let env = std::env::var(OUT_ENV).ok();
            let dir = resolve_out_dir(out.as_deref(), env.as_deref(), &parsed);
            let output = run_experiment(&parsed, &dir, jobs)?;
            print!("{}", render_table(&output.summary));
            eprintln!("wrote {} logs, summary and plots to {}", output.log_files.len(), dir.display());
        }
        Command::Report { logs, thresholds, json } => {
            if let Some(t) = thresholds.iter().find(|t| !t.is_finite()) {
                return Err(sharpzo_cli::CliError::Spec { field: "--threshold".into(), message: format!("non-finite value {t}") });
            }
            let summary = compare_report(&logs, &thresholds)?;
            if json {
                print!("{}", String::from_utf8_lossy(&summary.to_json()));
            } else {
                print!("{}", render_table(&summary));
            }
        }
        Command::Verify => {
            let checks = verify::run_all();
            for c in &checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
