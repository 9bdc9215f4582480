//! File formats: CSV trajectories with JSON sidecars, discrete trajectories
//! and versioned model documents.

use anyhow::Context;
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Problems with user-supplied files. Maps to the usage/IO exit code.
#[derive(Debug, thiserror::Error)]
pub enum InputError {
    #[error("cannot read {path}")]
    Open { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: {message}")]
    Content { path: PathBuf, message: String },
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> InputError {
    InputError::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn records(path: &Path) -> Result<Vec<(u64, Vec<String>)>, InputError> {
    let text = std::fs::read_to_string(path).map_err(|source| InputError::Open { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

/// Frames of a trajectory file, with the time column split off when present.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTrajectory {
    pub header: Option<Vec<String>>,
    pub times: Option<Vec<f64>>,
    pub frames: DMatrix<f64>,
}

/// Read comma-separated float frames, one per row. A first row that does
/// not parse as numbers is taken as the header. With `time_column`, the
/// first column holds the sample times.
pub fn read_trajectory_csv(path: &Path, time_column: bool) -> Result<CsvTrajectory, InputError> {
    let mut rows = records(path)?;
    let mut header = None;
    if let Some((_, first)) = rows.first() {
        if first.iter().any(|f| f.parse::<f64>().is_err()) {
            header = Some(first.clone());
            rows.remove(0);
        }
    }
    if rows.is_empty() {
        return Err(InputError::Content { path: path.to_path_buf(), message: "no data rows".into() });
    }
    let width = rows[0].1.len();
    let mut values = Vec::with_capacity(rows.len() * width);
    for (line, row) in &rows {
        if row.len() != width {
            return Err(parse_error(path, *line, format!("expected {width} fields, found {}", row.len())));
        }
        for field in row {
            let v: f64 = field.parse().map_err(|_| parse_error(path, *line, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(path, *line, format!("`{field}` is not finite")));
            }
            values.push(v);
        }
    }
    let all = DMatrix::from_row_slice(rows.len(), width, &values);
    if time_column {
        if width < 2 {
            return Err(InputError::Content { path: path.to_path_buf(), message: "a time column needs at least one data column next to it".into() });
        }
        let times = all.column(0).iter().copied().collect();
        let frames = all.columns(1, width - 1).into_owned();
        let header = header.map(|h| h.into_iter().skip(1).collect());
        Ok(CsvTrajectory { header, times: Some(times), frames })
    } else {
        Ok(CsvTrajectory { header, times: None, frames: all })
    }
}

/// Read a discrete trajectory: non-negative integers separated by commas,
/// whitespace or newlines.
pub fn read_discrete_trajectory(path: &Path) -> Result<Vec<usize>, InputError> {
    let text = std::fs::read_to_string(path).map_err(|source| InputError::Open { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for token in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let s = token.parse().map_err(|_| parse_error(path, i as u64 + 1, format!("`{token}` is not a state index")))?;
            out.push(s);
        }
    }
    Ok(out)
}

pub fn matrix_to_csv(header: Option<&[String]>, m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, header: Option<&[String]>, m: &DMatrix<f64>) -> anyhow::Result<()> {
    std::fs::write(path, matrix_to_csv(header, m)).with_context(|| format!("writing {}", path.display()))
}

/// Metadata written next to a generated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    pub system: String,
    pub parameters: serde_json::Value,
    pub seed: u64,
    pub dt: f64,
    pub n_frames: usize,
}

/// Write `<stem>.csv` and `<stem>.json` into `dir`; returns both paths.
pub fn write_trajectory(dir: &Path, stem: &str, header: &[String], frames: &DMatrix<f64>, sidecar: &TrajectorySidecar) -> anyhow::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    write_matrix_csv(&csv_path, Some(header), frames)?;
    std::fs::write(&json_path, serde_json::to_string_pretty(sidecar)?).with_context(|| format!("writing {}", json_path.display()))?;
    Ok((csv_path, json_path))
}

pub const MODEL_FORMAT: &str = "timelag-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Envelope around a serialized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument<T> {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub model: T,
}

pub fn model_to_json<T: Serialize>(kind: &str, model: &T) -> anyhow::Result<String> {
    let doc = ModelDocument { format: MODEL_FORMAT.to_string(), version: MODEL_FORMAT_VERSION, kind: kind.to_string(), model };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parse a model document, checking format, version and kind.
pub fn model_from_json<T: DeserializeOwned>(kind: &str, json: &str) -> anyhow::Result<T> {
    let doc: ModelDocument<serde_json::Value> = serde_json::from_str(json).context("not a model document")?;
    if doc.format != MODEL_FORMAT {
        anyhow::bail!("unknown document format `{}`", doc.format);
    }
    if doc.version != MODEL_FORMAT_VERSION {
        anyhow::bail!("unsupported model document version {}", doc.version);
    }
    if doc.kind != kind {
        anyhow::bail!("document holds a `{}`, expected `{kind}`", doc.kind);
    }
    Ok(serde_json::from_value(doc.model)?)
}
