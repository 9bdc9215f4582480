//! Coherent sets of the Bickley jet with kernel CCA, VAMP and KVAD.
//!
//! Particles are advected over `[t0, t1]`; each model is projected onto its
//! dominant singular functions and clustered. Coherence is measured by the
//! forward, noise, backward protocol: a particle keeps its label when the
//! back-mapped noisy image lands in the same cluster.

use crate::report::{ExperimentReport, Metric};
use anyhow::{Context, Result};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use timelag_core::basis::{cylinder_embedding, random_feature_net, FeatureMap};
use timelag_core::clustering::{kmeans_assign, kmeans_fit, ClusteringModel, KmeansConfig};
use timelag_core::datasets::{bickley_flow, BickleyConfig};
use timelag_core::decomposition::{kernel_cca_fit, kvad_fit, kvad_score_features, vamp_fit, vamp_score_features, Projection};
use timelag_core::kernels::Kernel;
use timelag_core::markov::coherence_score;
use timelag_core::covariance::CovarianceModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BickleyMethod {
    KernelCca,
    Vamp,
    Kvad,
}

impl BickleyMethod {
    pub const ALL: [BickleyMethod; 3] = [BickleyMethod::Kvad, BickleyMethod::Vamp, BickleyMethod::KernelCca];

    pub fn name(self) -> &'static str {
        match self {
            BickleyMethod::KernelCca => "kernel_cca",
            BickleyMethod::Vamp => "vamp",
            BickleyMethod::Kvad => "kvad",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BickleyParams {
    pub n_train: usize,
    pub n_test: usize,
    pub rounds: usize,
    pub n_sets: usize,
    pub restarts: usize,
    pub noise: f64,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub kcca_sigma: f64,
    pub kcca_epsilon: f64,
    pub kvad_sigma: f64,
    /// Kernel bandwidth of the reported KVAD score.
    pub score_sigma: f64,
    pub hidden: usize,
    pub features: usize,
    pub vamp_epsilon: f64,
    pub seed: u64,
}

impl Default for BickleyParams {
    fn default() -> Self {
        Self {
            n_train: 3000,
            n_test: 2500,
            rounds: 15,
            n_sets: 9,
            restarts: 500,
            noise: 0.1,
            t0: 0.0,
            t1: 40.0,
            dt: 1e-2,
            kcca_sigma: 0.58,
            kcca_epsilon: 5.6e-3,
            kvad_sigma: 1.0,
            score_sigma: 0.5,
            hidden: 100,
            features: 50,
            vamp_epsilon: 1e-6,
            seed: 0,
        }
    }
}

/// One scoring round: fresh particles, their forward images and the
/// back-mapped noisy images.
#[derive(Debug, Clone)]
pub struct ScoringRound {
    pub x0: DMatrix<f64>,
    pub x1: DMatrix<f64>,
    pub back: DMatrix<f64>,
}

/// Particle data shared by all methods.
#[derive(Debug, Clone)]
pub struct BickleyData {
    pub config: BickleyConfig,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub rounds: Vec<ScoringRound>,
}

impl BickleyData {
    pub fn generate(params: &BickleyParams) -> Result<Self> {
        Self::generate_with(BickleyConfig::default(), params)
    }

    pub fn generate_with(config: BickleyConfig, params: &BickleyParams) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let flow = |x: &DMatrix<f64>, t0: f64, t1: f64| bickley_flow(&config, x, t0, t1, params.dt).context("particle integration diverged");
        let x = config.uniform_particles(params.n_train, &mut rng);
        let y = flow(&x, params.t0, params.t1)?;
        let noise = Normal::new(0.0, params.noise).context("noise level")?;
        let mut rounds = Vec::with_capacity(params.rounds);
        for _ in 0..params.rounds {
            let x0 = config.uniform_particles(params.n_test, &mut rng);
            let x1 = flow(&x0, params.t0, params.t1)?;
            let mut noisy = x1.clone();
            for v in noisy.iter_mut() {
                *v += noise.sample(&mut rng);
            }
            for i in 0..noisy.nrows() {
                noisy[(i, 0)] = config.wrap(noisy[(i, 0)]);
            }
            let back = flow(&noisy, params.t1, params.t0)?;
            rounds.push(ScoringRound { x0, x1, back });
        }
        Ok(Self { config, x, y, rounds })
    }
}

/// Random feature network on the cylinder embedding.
pub fn bickley_features(params: &BickleyParams) -> FeatureMap {
    random_feature_net(params.seed.wrapping_add(1), params.hidden, params.features)
}

/// Fit `method` on the training pairs; returns the projection onto the
/// first `n_sets` singular functions.
pub fn fit_projection(method: BickleyMethod, data: &BickleyData, params: &BickleyParams) -> Result<FeatureMap> {
    let k = params.n_sets;
    let map = match method {
        BickleyMethod::KernelCca => {
            let kernel = Kernel::gaussian(params.kcca_sigma)?;
            kernel_cca_fit(&data.x, &data.y, &kernel, k, params.kcca_epsilon)?.projection_map(k)?
        }
        BickleyMethod::Vamp => {
            let f = bickley_features(params);
            let cov = CovarianceModel::from_pairs(&f.transform(&data.x)?, &f.transform(&data.y)?, false, true)?;
            vamp_fit(&cov, k, params.vamp_epsilon)?.with_basis(f.clone(), f).projection_map(k)?
        }
        BickleyMethod::Kvad => {
            let f = bickley_features(params);
            kvad_fit(&data.x, &data.y, &f, &Kernel::gaussian(params.kvad_sigma)?)?.projection_map(k)?
        }
    };
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BickleyOutcome {
    pub method: BickleyMethod,
    pub coherence: Metric,
    pub vamp2: Metric,
    pub kvad: Metric,
    pub clustering: ClusteringModel,
    /// Cluster labels of the training particles at `t0`.
    pub train_labels: Vec<usize>,
    pub wall_seconds: f64,
}

pub fn evaluate(method: BickleyMethod, data: &BickleyData, params: &BickleyParams) -> Result<BickleyOutcome> {
    let start = Instant::now();
    let map = fit_projection(method, data, params)?;
    let projected = map.transform(&data.x)?;
    let clustering = kmeans_fit(&projected, &KmeansConfig::new(params.n_sets, params.seed).restarts(params.restarts))?;
    let train_labels = kmeans_assign(&clustering, &projected)?;
    let score_kernel = Kernel::gaussian(params.score_sigma)?;
    let (mut coherence, mut vamp2, mut kvad) = (Vec::new(), Vec::new(), Vec::new());
    for round in &data.rounds {
        let f0 = map.transform(&round.x0)?;
        let a = kmeans_assign(&clustering, &f0)?;
        let b = kmeans_assign(&clustering, &map.transform(&round.back)?)?;
        coherence.push(coherence_score(&a, &b, params.n_sets)?.expectation);
        vamp2.push(vamp_score_features(&f0, &map.transform(&round.x1)?, 2, params.vamp_epsilon)?);
        kvad.push(kvad_score_features(&f0, &round.x1, &score_kernel)?);
    }
    Ok(BickleyOutcome {
        method,
        coherence: Metric::from_samples(&coherence),
        vamp2: Metric::from_samples(&vamp2),
        kvad: Metric::from_samples(&kvad),
        clustering,
        train_labels,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Cylinder coordinates of the particles, for plotting.
pub fn cylinder_coordinates(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), 3, |i, j| cylinder_embedding(x[(i, 0)], x[(i, 1)])[j])
}

pub fn run(methods: &[BickleyMethod], params: &BickleyParams) -> Result<(BickleyData, Vec<BickleyOutcome>)> {
    let data = BickleyData::generate(params)?;
    let outcomes = methods.iter().map(|&m| evaluate(m, &data, params)).collect::<Result<Vec<_>>>()?;
    Ok((data, outcomes))
}

pub fn report(outcomes: &[BickleyOutcome], params: &BickleyParams, wall_seconds: f64) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("bickley", params.seed, serde_json::to_value(params)?);
    for o in outcomes {
        report.add_metric(&format!("{}.coherence", o.method.name()), o.coherence.clone());
        report.add_metric(&format!("{}.vamp2", o.method.name()), o.vamp2.clone());
        report.add_metric(&format!("{}.kvad", o.method.name()), o.kvad.clone());
    }
    report.wall_seconds = wall_seconds;
    Ok(report)
}
