//! Markov state model pipeline: counting, connected restriction, maximum
//! likelihood, spectrum.

use crate::report::{ExperimentReport, Metric};
use anyhow::Result;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use timelag_core::datasets::{discretize_uniform, quadwell_1d, FourWellPotential};
use timelag_core::markov::{
    count_transitions, largest_connected_submodel, msm_mle, spectral_analysis, timescales, CountingMode, MarkovStateModel,
};
use timelag_core::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsmParams {
    pub lag: usize,
    pub reversible: bool,
    /// Number of implied timescales to report.
    pub k: usize,
    pub counting: CountingModeName,
    pub tolerance: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingModeName {
    Sliding,
    Strided,
}

impl From<CountingModeName> for CountingMode {
    fn from(m: CountingModeName) -> Self {
        match m {
            CountingModeName::Sliding => CountingMode::Sliding,
            CountingModeName::Strided => CountingMode::Strided,
        }
    }
}

impl Default for MsmParams {
    fn default() -> Self {
        Self { lag: 1, reversible: true, k: 3, counting: CountingModeName::Sliding, tolerance: 1e-12, max_iter: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsmOutcome {
    /// Original state indices kept by the connected restriction.
    pub active_set: Vec<usize>,
    pub msm: MarkovStateModel,
    /// Leading `k + 1` eigenvalues (real parts), stationary one first.
    pub eigenvalues: Vec<f64>,
    pub timescales: Vec<f64>,
}

pub fn estimate<T: AsRef<[usize]>>(trajectories: &[T], params: &MsmParams) -> timelag_core::Result<MsmOutcome> {
    let counts = count_transitions(trajectories, params.lag, params.counting.into())?;
    let active = largest_connected_submodel(&counts, true)?;
    if active.n_states() <= params.k {
        return Err(Error::InsufficientData(format!(
            "largest connected set has {} states, need more than k = {}",
            active.n_states(),
            params.k
        )));
    }
    let msm = msm_mle(&active, params.reversible, params.tolerance, params.max_iter)?;
    let spectrum = spectral_analysis(&msm, params.k + 1)?;
    let timescales = timescales(&msm, params.k)?;
    Ok(MsmOutcome { active_set: active.state_symbols.clone(), eigenvalues: spectrum.real_eigenvalues(), timescales, msm })
}

pub fn report(outcome: &MsmOutcome, params: &MsmParams, n_trajectories: usize) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("msm", 0, serde_json::to_value(params)?);
    report.add_metric("n_trajectories", Metric::single(n_trajectories as f64));
    report.add_metric("active_states", Metric::single(outcome.active_set.len() as f64));
    report.add_metric("eigenvalue_sum", Metric::single(outcome.eigenvalues.iter().sum()));
    for (i, t) in outcome.timescales.iter().enumerate() {
        report.add_metric(&format!("timescale_{}", i + 1), Metric::single(*t));
    }
    Ok(report)
}

pub fn column(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}

/// Four-well random walk for discretization studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourWellParams {
    pub n_frames: usize,
    pub h: f64,
    pub n_substeps: usize,
    pub lag: usize,
    /// Interval split into uniform bins.
    pub range: (f64, f64),
    pub seed: u64,
}

impl Default for FourWellParams {
    fn default() -> Self {
        Self { n_frames: 1_000_000, h: 1e-3, n_substeps: 10, lag: 10, range: (-3.5, 3.5), seed: 0 }
    }
}

pub fn fourwell_trajectory(params: &FourWellParams) -> timelag_core::Result<DVector<f64>> {
    let t = quadwell_1d(&FourWellPotential::default(), params.seed, params.n_frames, params.h, params.n_substeps)?;
    Ok(t.frames.column(0).into_owned())
}

/// Reversible MSM on `n_bins` uniform bins of the four-well trajectory.
pub fn fourwell_msm(x: &DVector<f64>, n_bins: usize, n_eigenvalues: usize, params: &FourWellParams) -> timelag_core::Result<MsmOutcome> {
    let dtraj = discretize_uniform(x, params.range.0, params.range.1, n_bins);
    let msm_params = MsmParams { lag: params.lag, k: n_eigenvalues - 1, ..MsmParams::default() };
    estimate(&[dtraj], &msm_params)
}

/// Sum of the `n_eigenvalues` leading eigenvalues for each discretization.
pub fn eigenvalue_sum_scan(x: &DVector<f64>, bins: &[usize], n_eigenvalues: usize, params: &FourWellParams) -> timelag_core::Result<Vec<(usize, f64)>> {
    bins.iter()
        .map(|&b| fourwell_msm(x, b, n_eigenvalues, params).map(|o| (b, o.eigenvalues.iter().sum())))
        .collect()
}
