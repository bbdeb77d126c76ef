//! Experiment runner for the sharpzo optimizer: parses spec files, runs
//! method × seed sweeps in parallel, and writes CSV logs, summaries and
//! SVG convergence plots.

pub mod error;
pub mod experiment;
pub mod logio;
pub mod plot;
pub mod report;
pub mod spec;
pub mod summary;
pub mod verify;

pub use error::{CliError, Result};
pub use experiment::{run_experiment, ExperimentOutput};
pub use logio::{read_log, COLUMNS};
pub use report::compare_report;
pub use spec::{parse_spec, ExperimentSpec};
