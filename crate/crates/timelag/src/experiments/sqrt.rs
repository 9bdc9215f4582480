//! Dimension reduction on the sqrt-transformed two-state model.
//!
//! Each method is reduced to one slow coordinate; the coordinate is scored by
//! cross-validated VAMP-2 and by the accuracy of a 2-means split against the
//! hidden states.

use crate::report::{ExperimentReport, Metric};
use anyhow::{bail, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use timelag_core::basis::{monomial_features, FeatureMap};
use timelag_core::clustering::{kmeans_assign, kmeans_fit, KmeansConfig};
use timelag_core::covariance::{lagged_pairs, CovarianceModel};
use timelag_core::datasets::{sample_sqrt_model, SqrtSample};
use timelag_core::decomposition::{
    assignment_accuracy, edmd_fit, kernel_cca_fit, kernel_edmd_fit, tica_fit, vamp_cross_validate, vamp_fit, Projection,
};
use timelag_core::kernels::Kernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqrtMethod {
    Tica,
    Edmd,
    Backtransform,
    KernelEdmd,
    KernelCca,
}

impl SqrtMethod {
    pub const ALL: [SqrtMethod; 5] = [SqrtMethod::Tica, SqrtMethod::Edmd, SqrtMethod::Backtransform, SqrtMethod::KernelEdmd, SqrtMethod::KernelCca];

    pub fn name(self) -> &'static str {
        match self {
            SqrtMethod::Tica => "tica",
            SqrtMethod::Edmd => "edmd",
            SqrtMethod::Backtransform => "backtransform",
            SqrtMethod::KernelEdmd => "kernel_edmd",
            SqrtMethod::KernelCca => "kernel_cca",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqrtParams {
    pub n_frames: usize,
    pub folds: usize,
    pub lag: usize,
    pub edmd_degree: u32,
    pub kernel_edmd_sigma: f64,
    pub kernel_edmd_epsilon: f64,
    pub kernel_cca_sigma: f64,
    pub kernel_cca_epsilon: f64,
    /// Eigenvalue cutoff for whitening and VAMP scoring.
    pub epsilon: f64,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

impl Default for SqrtParams {
    fn default() -> Self {
        Self {
            n_frames: 1000,
            folds: 10,
            lag: 1,
            edmd_degree: 2,
            kernel_edmd_sigma: 1.42,
            kernel_edmd_epsilon: 6.7e-4,
            kernel_cca_sigma: 0.85,
            kernel_cca_epsilon: 0.36,
            epsilon: 1e-10,
            kmeans_restarts: 10,
            seed: 0,
        }
    }
}

/// `map` followed by selection of output column `j`.
fn select(map: FeatureMap, j: usize) -> FeatureMap {
    let d = map.dimension_out();
    let mut e = DMatrix::zeros(d, 1);
    e[(j, 0)] = 1.0;
    FeatureMap::Chain(vec![map, FeatureMap::Affine { matrix: e, offset: DVector::zeros(d) }])
}

/// Fit `method` on the pairs `(x, y)` and return its slow coordinate.
pub fn fit_slow_coordinate(method: SqrtMethod, x: &DMatrix<f64>, y: &DMatrix<f64>, params: &SqrtParams) -> timelag_core::Result<FeatureMap> {
    let map = match method {
        SqrtMethod::Tica => tica_fit(&CovarianceModel::from_pairs(x, y, true, true)?, 1, params.epsilon)?.projection_map(1)?,
        SqrtMethod::Edmd => {
            // The constant monomial is an exact eigenfunction with eigenvalue one.
            let model = edmd_fit(x, y, &monomial_features(2, params.edmd_degree)?, params.epsilon)?;
            select(model.projection_map(2)?, 1)
        }
        SqrtMethod::Backtransform => {
            let shear = FeatureMap::SqrtShear { coefficient: -1.0 };
            let cov = CovarianceModel::from_pairs(&shear.transform(x)?, &shear.transform(y)?, false, true)?;
            vamp_fit(&cov, 1, params.epsilon)?.with_basis(shear.clone(), shear).projection_map(1)?
        }
        SqrtMethod::KernelEdmd => {
            let white = FeatureMap::whitening(x, params.epsilon)?;
            let (wx, wy) = (white.transform(x)?, white.transform(y)?);
            let model = kernel_edmd_fit(&wx, &wy, &Kernel::gaussian(params.kernel_edmd_sigma)?, params.kernel_edmd_epsilon, 2)?;
            FeatureMap::Chain(vec![white, select(model.projection_map(2)?, 1)])
        }
        SqrtMethod::KernelCca => {
            kernel_cca_fit(x, y, &Kernel::gaussian(params.kernel_cca_sigma)?, 1, params.kernel_cca_epsilon)?.projection_map(1)?
        }
    };
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqrtOutcome {
    pub method: SqrtMethod,
    pub vamp2: Metric,
    pub accuracy: f64,
    /// Slow coordinate on every frame.
    pub projection: Vec<f64>,
    pub labels: Vec<usize>,
    pub wall_seconds: f64,
}

pub fn evaluate(method: SqrtMethod, sample: &SqrtSample, params: &SqrtParams) -> Result<SqrtOutcome> {
    let start = Instant::now();
    let (x, y) = lagged_pairs(&sample.observations, params.lag);
    let cv = vamp_cross_validate(&x, &y, params.folds, 2, params.epsilon, |tx, ty| fit_slow_coordinate(method, tx, ty, params))?;
    let map = fit_slow_coordinate(method, &x, &y, params)?;
    let projected = map.transform(&sample.observations)?;
    let clustering = kmeans_fit(&projected, &KmeansConfig::new(2, params.seed).restarts(params.kmeans_restarts))?;
    let labels = kmeans_assign(&clustering, &projected)?;
    let accuracy = assignment_accuracy(&labels, &sample.hidden)?;
    Ok(SqrtOutcome {
        method,
        vamp2: Metric { value: cv.mean, std: cv.std, samples: cv.scores },
        accuracy,
        projection: projected.column(0).iter().copied().collect(),
        labels,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run(methods: &[SqrtMethod], params: &SqrtParams) -> Result<(SqrtSample, Vec<SqrtOutcome>)> {
    if methods.is_empty() {
        bail!("no methods selected");
    }
    let sample = sample_sqrt_model(params.n_frames, params.seed)?;
    let outcomes = methods.iter().map(|&m| evaluate(m, &sample, params)).collect::<Result<Vec<_>>>()?;
    Ok((sample, outcomes))
}

pub fn report(outcomes: &[SqrtOutcome], params: &SqrtParams, wall_seconds: f64) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("sqrt", params.seed, serde_json::to_value(params)?);
    for o in outcomes {
        report.add_metric(&format!("{}.vamp2", o.method.name()), o.vamp2.clone());
        report.add_metric(&format!("{}.accuracy", o.method.name()), Metric::single(o.accuracy));
    }
    report.wall_seconds = wall_seconds;
    Ok(report)
}
