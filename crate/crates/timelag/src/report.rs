//! Experiment reports: one JSON document plus CSV artifacts in an output
//! directory.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Mean and population standard deviation of repeated measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub std: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<f64>,
}

impl Metric {
    pub fn single(value: f64) -> Self {
        Self { value, std: 0.0, samples: Vec::new() }
    }

    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len().max(1) as f64;
        let value = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - value).powi(2)).sum::<f64>() / n;
        Self { value, std: var.sqrt(), samples: samples.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub parameters: serde_json::Value,
    pub metrics: BTreeMap<String, Metric>,
    /// Artifact paths relative to the report's directory.
    pub artifacts: Vec<PathBuf>,
    pub seed: u64,
    pub wall_seconds: f64,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64, parameters: serde_json::Value) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: experiment.to_string(),
            parameters,
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
            seed,
            wall_seconds: 0.0,
        }
    }

    pub fn add_metric(&mut self, name: &str, metric: Metric) {
        self.metrics.insert(name.to_string(), metric);
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.get(name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Write `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json()?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Metrics as `name,value,std` rows.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("metric,value,std\n");
        for (name, m) in &self.metrics {
            out.push_str(&format!("{name},{},{}\n", m.value, m.std));
        }
        out
    }
}

/// Parse a report and check the structural rules a consumer relies on.
pub fn validate_report(json: &str) -> Result<ExperimentReport> {
    let raw: serde_json::Value = serde_json::from_str(json).context("report is not valid JSON")?;
    let obj = raw.as_object().context("report must be a JSON object")?;
    for key in ["schema_version", "experiment", "parameters", "metrics", "artifacts", "seed", "wall_seconds"] {
        if !obj.contains_key(key) {
            bail!("report is missing field `{key}`");
        }
    }
    let report: ExperimentReport = serde_json::from_value(raw).context("report fields have the wrong types")?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        bail!("unsupported schema version {}", report.schema_version);
    }
    if report.experiment.is_empty() {
        bail!("experiment id is empty");
    }
    for (name, m) in &report.metrics {
        if name.is_empty() || !m.value.is_finite() || !(m.std >= 0.0) {
            bail!("metric `{name}` is malformed");
        }
    }
    if report.artifacts.iter().any(|p| p.is_absolute()) {
        bail!("artifact paths must be relative");
    }
    if !(report.wall_seconds >= 0.0) {
        bail!("negative wall time");
    }
    Ok(report)
}
