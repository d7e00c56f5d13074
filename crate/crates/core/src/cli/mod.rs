//! Config-driven front end: JSON configs in, JSON and CSV reports out.

mod analyze;
mod checks;
mod experiment;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use analyze::{analyze, load_table, AnalysisReport, AnalyzeConfig, AnalyzeEstimator, ColumnRoles, DataTable};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport};

/// Exit status for a validation failure (bad config or data).
pub const EXIT_VALIDATION: u8 = 2;
/// Exit status for a failure during computation.
pub const EXIT_COMPUTE: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Every violation found, not just the first.
    Validation(Vec<String>),
    Compute { context: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Compute { .. } => EXIT_COMPUTE,
        }
    }

    pub(crate) fn compute(context: impl Into<String>, err: impl fmt::Display) -> Self {
        CliError::Compute { context: context.into(), message: err.to_string() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CliError::Validation(vec![msg.into()])
    }

    /// Machine-readable form printed on stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            error: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            violations: Option<&'a [String]>,
            #[serde(skip_serializing_if = "Option::is_none")]
            context: Option<&'a str>,
            #[serde(skip_serializing_if = "Option::is_none")]
            message: Option<&'a str>,
        }
        let out = match self {
            CliError::Validation(v) => Out { error: "validation", violations: Some(v), context: None, message: None },
            CliError::Compute { context, message } => {
                Out { error: "compute", violations: None, context: Some(context), message: Some(message) }
            }
        };
        serde_json::to_string(&out).expect("error report serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(v) => write!(f, "invalid configuration: {}", v.join("; ")),
            CliError::Compute { context, message } => write!(f, "{context}: {message}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Command-line overrides shared by every verb.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Either kind of config, told apart by the `setting` key.
#[derive(Debug, Clone)]
pub enum AnyConfig {
    Experiment(ExperimentConfig),
    Analyze(AnalyzeConfig),
}

pub fn read_config(path: &Path) -> Result<AnyConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<AnyConfig, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::invalid(format!("config is not valid JSON: {e}")))?;
    let is_experiment = value.get("setting").is_some();
    if is_experiment {
        serde_json::from_value(value).map(AnyConfig::Experiment)
    } else {
        serde_json::from_value(value).map(AnyConfig::Analyze)
    }
    .map_err(|e| CliError::invalid(format!("config: {e}")))
}

/// Parse and check a config without computing anything.
pub fn validate(text: &str) -> Result<AnyConfig, CliError> {
    let cfg = parse_config(text)?;
    let violations = match &cfg {
        AnyConfig::Experiment(c) => c.violations(),
        AnyConfig::Analyze(c) => c.violations(),
    };
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Validation(violations))
    }
}

/// Shortest round-trip decimal, identical to the JSON rendering.
pub fn format_number(x: f64) -> String {
    serde_json::to_string(&x).expect("f64 serializes")
}

pub(crate) fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build().map_err(|e| CliError::compute("thread pool", e))?;
            Ok(pool.install(f))
        }
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::compute(format!("writing {}", path.display()), e))
}

pub(crate) fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::compute(format!("creating {}", dir.display()), e))
}

pub(crate) fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::compute("csv", e))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::compute("csv", e))?;
    }
    w.into_inner().map_err(|e| CliError::compute("csv", e))
}

pub(crate) fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::compute("json", e))?;
    bytes.push(b'\n');
    Ok(bytes)
}
