//! Experiment spec files.
//!
//! ```toml
//! [experiment]
//! seeds = [0, 1, 2]
//! budget = 10000
//! thresholds = [1e-2, 1e-4]
//! out = "results/quadratic"
//!
//! [objective]
//! kind = "quadratic"
//! d = 32
//! condition_number = 100.0
//!
//! [method.sharpzo]
//! eta = 1.4e-4
//!
//! [method.cold]
//! variant = "zosgd-dense"
//! eta = 1.4e-4
//! ```
//!
//! Every table rejects unknown keys. A method section without `variant`
//! takes its variant from the section name.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sharpzo::driver::{Handoff, RunConfig, Stage1Mode};
use sharpzo::objectives::ObjectiveDescriptor;
use sharpzo::zosgd::PruningMode;

use crate::error::{CliError, Result};

pub const DEFAULT_OUT: &str = "sharpzo-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Sharpzo,
    SharpzoMagnitude,
    SharpzoDense,
    CmaesNaive,
    ZosgdDense,
    ZosgdMagnitude,
    SharpzoLiteralEq4,
    SharpzoLiteralEq5,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Self::Sharpzo,
        Self::SharpzoMagnitude,
        Self::SharpzoDense,
        Self::CmaesNaive,
        Self::ZosgdDense,
        Self::ZosgdMagnitude,
        Self::SharpzoLiteralEq4,
        Self::SharpzoLiteralEq5,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sharpzo => "sharpzo",
            Self::SharpzoMagnitude => "sharpzo-magnitude",
            Self::SharpzoDense => "sharpzo-dense",
            Self::CmaesNaive => "cmaes-naive",
            Self::ZosgdDense => "zosgd-dense",
            Self::ZosgdMagnitude => "zosgd-magnitude",
            Self::SharpzoLiteralEq4 => "sharpzo-literal-eq4",
            Self::SharpzoLiteralEq5 => "sharpzo-literal-eq5",
        }
    }

    /// Applies the variant's stage-1 mode, pruning metric and switches.
    pub fn configure(self, config: &mut RunConfig) {
        let (stage1, pruning) = match self {
            Self::Sharpzo | Self::SharpzoLiteralEq4 | Self::SharpzoLiteralEq5 => {
                (Stage1Mode::Sharp, PruningMode::Zscore)
            }
            Self::SharpzoMagnitude => (Stage1Mode::Sharp, PruningMode::Magnitude),
            Self::SharpzoDense => (Stage1Mode::Sharp, PruningMode::None),
            Self::CmaesNaive => (Stage1Mode::Naive, PruningMode::None),
            Self::ZosgdDense => (Stage1Mode::Off, PruningMode::None),
            Self::ZosgdMagnitude => (Stage1Mode::Off, PruningMode::Magnitude),
        };
        config.stage1 = stage1;
        config.pruning = pruning;
        config.literal_eq4 = self == Self::SharpzoLiteralEq4;
        config.literal_eq5 = self == Self::SharpzoLiteralEq5;
        if self == Self::CmaesNaive {
            config.early_stop = false;
            config.stage1_cap = config.total_steps;
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| {
            let known: Vec<_> = Self::ALL.iter().map(|v| v.as_str()).collect();
            format!("unknown variant `{s}`, expected one of {}", known.join(", "))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub budget: Option<u64>,
    /// Step cap; defaults to `budget` (every step costs at least one query).
    #[serde(default)]
    pub total_steps: Option<usize>,
    /// Train-loss targets for the queries-to-threshold columns.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub record_wall_time: bool,
}

/// Per-method hyperparameter overrides on top of the driver defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub variant: Option<Variant>,
    pub total_steps: Option<usize>,
    pub population: Option<usize>,
    pub rho: Option<f64>,
    pub sigma0: Option<f64>,
    pub mu_cge: Option<f64>,
    pub mu_rge: Option<f64>,
    pub q: Option<usize>,
    pub eta: Option<f64>,
    pub prune_interval: Option<usize>,
    pub sparsity: Option<f64>,
    pub fisher_batches: Option<usize>,
    pub patience: Option<usize>,
    pub improve_tol: Option<f64>,
    pub stage1_cap: Option<usize>,
    pub early_stop: Option<bool>,
    pub handoff: Option<Handoff>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    experiment: ExperimentSection,
    objective: ObjectiveDescriptor,
    #[serde(default)]
    method: BTreeMap<String, MethodSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSpec {
    pub name: String,
    pub variant: Variant,
    /// Fully resolved configuration; `seed` is overwritten per run.
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub objective: ObjectiveDescriptor,
    pub methods: Vec<MethodSpec>,
    pub seeds: Vec<u64>,
    pub budget: Option<u64>,
    pub thresholds: Vec<f64>,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn run_count(&self) -> usize {
        self.methods.len() * self.seeds.len()
    }

    pub fn config_for(&self, method: &MethodSpec, seed: u64) -> RunConfig {
        RunConfig { seed, ..method.config.clone() }
    }
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_spec_named(&text, &path.display().to_string())
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    parse_spec_named(text, "<spec>")
}

fn parse_spec_named(text: &str, origin: &str) -> Result<ExperimentSpec> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| CliError::Parse {
        path: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })?;
    resolve(raw)
}

fn resolve(raw: RawSpec) -> Result<ExperimentSpec> {
    let exp = raw.experiment;
    if exp.seeds.is_empty() {
        return Err(CliError::spec("experiment.seeds", "at least one seed is required"));
    }
    let mut sorted = exp.seeds.clone();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::spec("experiment.seeds", format!("duplicate seed {}", w[0])));
    }
    if exp.budget == Some(0) {
        return Err(CliError::spec("experiment.budget", "must be at least 1"));
    }
    if let Some(t) = exp.thresholds.iter().find(|t| !t.is_finite()) {
        return Err(CliError::spec("experiment.thresholds", format!("non-finite threshold {t}")));
    }
    if raw.method.is_empty() {
        return Err(CliError::spec("method", "at least one [method.<name>] section is required"));
    }
    let d = raw.objective.dim();
    if d == 0 {
        return Err(CliError::spec("objective.d", "must be at least 1"));
    }

    let mut methods = Vec::with_capacity(raw.method.len());
    for (name, section) in raw.method {
        let field = format!("method.{name}");
        check_method_name(&name).map_err(|m| CliError::spec(&field, m))?;
        let variant = match section.variant {
            Some(v) => v,
            None => name.parse().map_err(|m: String| {
                CliError::spec(format!("{field}.variant"), format!("missing, and section name is not a variant: {m}"))
            })?,
        };
        let total_steps = section
            .total_steps
            .or(exp.total_steps)
            .or(exp.budget.map(|b| usize::try_from(b).unwrap_or(usize::MAX)))
            .ok_or_else(|| CliError::spec("experiment", "set `budget` or `total_steps`"))?;

        let mut config = RunConfig { total_steps, budget: exp.budget, record_wall_time: exp.record_wall_time, ..RunConfig::new(d) };
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = section.$f { config.$f = v; } )* };
        }
        apply!(population, rho, sigma0, mu_cge, mu_rge, q, eta, prune_interval, sparsity, patience, improve_tol, stage1_cap, early_stop, handoff);
        if section.fisher_batches.is_some() {
            config.fisher_batches = section.fisher_batches;
        }
        variant.configure(&mut config);
        if variant == Variant::CmaesNaive && section.stage1_cap.is_some() {
            return Err(CliError::spec(format!("{field}.stage1_cap"), "cmaes-naive runs stage 1 for the whole run"));
        }
        config.validate().map_err(|e| CliError::spec(&field, e.to_string()))?;
        methods.push(MethodSpec { name, variant, config });
    }

    Ok(ExperimentSpec {
        objective: raw.objective,
        methods,
        seeds: exp.seeds,
        budget: exp.budget,
        thresholds: exp.thresholds,
        out: exp.out,
    })
}

/// Method names become file-name prefixes, so keep them plain.
fn check_method_name(name: &str) -> std::result::Result<(), String> {
    if name.is_empty() || name.contains("__") {
        return Err("method names must be non-empty and must not contain `__`".into());
    }
    if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(format!("method name `{name}` may only use ASCII letters, digits, `-` and `_`"));
    }
    Ok(())
}

/// `--out` beats `SHARPZO_OUT`, which beats the spec's `out`.
pub fn resolve_out_dir(cli: Option<&Path>, env: Option<&str>, spec: &ExperimentSpec) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .or_else(|| spec.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}
