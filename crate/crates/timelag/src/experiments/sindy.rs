//! Sparse regression of governing equations from a trajectory.

use crate::report::{ExperimentReport, Metric};
use anyhow::{bail, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use timelag_core::basis::{identity_features, monomial_features, FeatureMap};
use timelag_core::datasets::{rossler, RosslerParams};
use timelag_core::sindy::{finite_difference, sindy_fit, sindy_score, sindy_simulate, SindyModel, TimeGrid};

/// `identity` or `poly:<degree>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LibrarySpec {
    Identity,
    Polynomial(u32),
}

impl FromStr for LibrarySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "identity" {
            return Ok(LibrarySpec::Identity);
        }
        match s.strip_prefix("poly:").map(str::parse) {
            Some(Ok(d)) => Ok(LibrarySpec::Polynomial(d)),
            _ => Err(format!("unknown library `{s}`; use `identity` or `poly:<degree>`")),
        }
    }
}

impl LibrarySpec {
    pub fn build(self, dim: usize) -> timelag_core::Result<FeatureMap> {
        match self {
            LibrarySpec::Identity => identity_features(dim),
            LibrarySpec::Polynomial(d) => monomial_features(dim, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SindyParams {
    pub library: LibrarySpec,
    pub threshold: f64,
    /// Sample spacing when the input has no time column.
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SindyOutcome {
    pub model: SindyModel,
    pub score: f64,
    /// Identified model integrated from the first frame over the input times.
    pub reconstruction: DMatrix<f64>,
    pub times: Vec<f64>,
}

pub fn fit(frames: &DMatrix<f64>, times: Option<&[f64]>, params: &SindyParams) -> Result<SindyOutcome> {
    let times: Vec<f64> = match (times, params.dt) {
        (Some(t), _) => t.to_vec(),
        (None, Some(dt)) => (0..frames.nrows()).map(|i| i as f64 * dt).collect(),
        (None, None) => bail!(crate::cli::UsageError("give --dt or --time-column".into())),
    };
    let grid = TimeGrid::Times(&times);
    let library = params.library.build(frames.ncols())?;
    let model = sindy_fit(frames, grid, &library, params.threshold, None, false)?;
    let dx = finite_difference(frames, grid)?;
    let score = sindy_score(&model, frames, &dx)?;
    let x0: Vec<f64> = frames.row(0).iter().copied().collect();
    let reconstruction = sindy_simulate(&model, &x0, &times)?;
    Ok(SindyOutcome { model, score, reconstruction, times })
}

/// Rössler attractor after a transient of 50 time units, sampled at `dt`.
pub fn rossler_data(t1: f64, dt: f64) -> timelag_core::Result<DMatrix<f64>> {
    let p = RosslerParams::default();
    let warm = rossler(&p, [1.0, 1.0, 1.0], 50.0, dt)?;
    let last = warm.frames.nrows() - 1;
    let x0 = [warm.frames[(last, 0)], warm.frames[(last, 1)], warm.frames[(last, 2)]];
    Ok(rossler(&p, x0, t1, dt)?.frames)
}

pub fn report(outcome: &SindyOutcome, params: &SindyParams) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("sindy", 0, serde_json::to_value(params)?);
    report.add_metric("r2", Metric::single(outcome.score));
    report.add_metric("nonzero_terms", Metric::single(outcome.model.support().len() as f64));
    Ok(report)
}

pub fn coefficient_table(model: &SindyModel) -> (Vec<String>, DMatrix<f64>) {
    (model.feature_names.clone(), model.xi.clone())
}
