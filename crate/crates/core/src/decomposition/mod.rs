//! Transfer-operator estimators and the models they produce.
//!
//! A [`TransferOperatorModel`] pairs observable transforms `f`, `g` with a
//! matrix `K` such that `E[g(x_{t+τ})] ≈ Kᵀ E[f(x_t)]`. Covariance-based
//! estimators produce the more specific [`CovarianceKoopmanModel`], whose
//! Koopman matrix is diagonal in the whitened bases `U`, `V`.

mod kernel;
mod kvad;
mod linear;

pub use kernel::{kernel_cca_fit, kernel_cca_fit_with, kernel_edmd_fit, CcaNormalization};
pub use kvad::{kvad_fit, kvad_score, kvad_score_features, KvadModel};
pub use linear::{
    dmd_fit, edmd_fit, tica_fit, vamp_cross_validate, vamp_fit, vamp_score, vamp_score_features, CvScore,
};

use crate::basis::FeatureMap;
use crate::covariance::CovarianceModel;
use crate::error::{invalid, Result};
use crate::prelude::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Estimator {
    Dmd,
    Edmd,
    Tica,
    Vamp,
    KernelEdmd,
    KernelCca,
    Kvad,
    Msm,
}

/// Models that can map data onto their dominant eigen- or singular functions.
pub trait Projection {
    /// Number of functions available for projection.
    fn rank(&self) -> usize;
    /// The first `n_components` dominant functions as a feature map.
    fn projection_map(&self, n_components: usize) -> Result<FeatureMap>;
    /// Columns are the first `n_components` dominant functions evaluated on
    /// the rows of `x`.
    fn project(&self, x: &DMatrix<f64>, n_components: usize) -> Result<DMatrix<f64>> {
        self.projection_map(n_components)?.transform(x)
    }
}

/// Evaluate the dominant functions of any fitted model.
pub fn project<M: Projection + ?Sized>(model: &M, x: &DMatrix<f64>, n_components: usize) -> Result<DMatrix<f64>> {
    model.project(x, n_components)
}

fn check_components(n_components: usize, rank: usize) -> Result<()> {
    if n_components > rank {
        return Err(invalid!("n_components = {n_components} exceeds model rank {rank}"));
    }
    Ok(())
}

/// Observable transforms `f`, `g` with propagation matrix `K`.
///
/// `modes` holds the coefficients of the dominant eigenfunctions in the
/// basis `f` (one column each, ordered like `eigenvalues`), so that
/// projection is `f(x) · modes`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransferOperatorModel {
    pub f: FeatureMap,
    pub g: FeatureMap,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub koopman: DMatrix<f64>,
    pub estimator: Estimator,
    pub eigenvalues: Vec<Complex64>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub modes: DMatrix<f64>,
}

impl TransferOperatorModel {
    /// `Kᵀ f(x)` for every row of `x`.
    pub fn propagate(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.f.transform(x)? * &self.koopman)
    }
}

impl Projection for TransferOperatorModel {
    fn rank(&self) -> usize {
        self.modes.ncols()
    }

    fn projection_map(&self, n_components: usize) -> Result<FeatureMap> {
        check_components(n_components, self.rank())?;
        let matrix = self.modes.columns(0, n_components).into_owned();
        let offset = DVector::zeros(matrix.nrows());
        Ok(chain(self.f.clone(), FeatureMap::Affine { matrix, offset }))
    }

    fn project(&self, x: &DMatrix<f64>, n_components: usize) -> Result<DMatrix<f64>> {
        check_components(n_components, self.rank())?;
        Ok(self.f.transform(x)? * self.modes.columns(0, n_components))
    }
}

/// Koopman model in whitened coordinates,
/// `E[Vᵀχ₁(x_{t+τ})] = diag(σ) E[Uᵀχ₀(x_t)]`.
///
/// For TICA models `sigma` holds the (possibly negative) eigenvalues and
/// `V = U`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CovarianceKoopmanModel {
    pub chi0: FeatureMap,
    pub chi1: FeatureMap,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub u: DMatrix<f64>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub v: DMatrix<f64>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
    pub sigma: DVector<f64>,
    pub covariances: CovarianceModel,
    pub estimator: Estimator,
}

impl CovarianceKoopmanModel {
    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    /// `diag(σ)`.
    pub fn koopman_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.sigma)
    }

    fn offset(&self, mean: &DVector<f64>) -> DVector<f64> {
        if self.covariances.mean_removed {
            mean.clone()
        } else {
            DVector::zeros(mean.len())
        }
    }

    /// Instantaneous singular (or eigen-) functions `Uᵀ(χ₀(x) − μ₀)`.
    pub fn forward_transform(&self) -> FeatureMap {
        chain(self.chi0.clone(), FeatureMap::Affine { matrix: self.u.clone(), offset: self.offset(&self.covariances.mean_0) })
    }

    /// Time-lagged singular functions `Vᵀ(χ₁(y) − μ_t)`.
    pub fn backward_transform(&self) -> FeatureMap {
        chain(self.chi1.clone(), FeatureMap::Affine { matrix: self.v.clone(), offset: self.offset(&self.covariances.mean_t) })
    }

    /// The general view with `f`, `g` the whitened transforms and `K = diag(σ)`.
    pub fn to_transfer_operator(&self) -> TransferOperatorModel {
        let k = self.dim();
        TransferOperatorModel {
            f: self.forward_transform(),
            g: self.backward_transform(),
            koopman: self.koopman_matrix(),
            estimator: self.estimator,
            eigenvalues: self.sigma.iter().map(|&s| Complex64::new(s, 0.0)).collect(),
            modes: DMatrix::identity(k, k),
        }
    }

    /// Training VAMP-r score `Σ|σ_i|^r`, plus one for the constant function
    /// implicitly removed with the mean.
    pub fn score(&self, r: u32) -> f64 {
        vamp_score(self, r, None).unwrap_or(f64::NAN)
    }
}

pub(crate) fn chain(first: FeatureMap, second: FeatureMap) -> FeatureMap {
    match first {
        FeatureMap::Identity { .. } => second,
        FeatureMap::Chain(mut maps) => {
            maps.push(second);
            FeatureMap::Chain(maps)
        }
        other => FeatureMap::Chain(vec![other, second]),
    }
}

impl Projection for CovarianceKoopmanModel {
    fn rank(&self) -> usize {
        self.dim()
    }

    fn projection_map(&self, n_components: usize) -> Result<FeatureMap> {
        check_components(n_components, self.rank())?;
        let matrix = self.u.columns(0, n_components).into_owned();
        Ok(chain(self.chi0.clone(), FeatureMap::Affine { matrix, offset: self.offset(&self.covariances.mean_0) }))
    }
}

/// Accuracy of a two-or-more-class assignment against a reference labeling,
/// maximized over relabelings of `predicted`.
pub fn assignment_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(invalid!("label sequences must be non-empty and of equal length"));
    }
    let k = predicted.iter().chain(truth).copied().max().unwrap_or(0) + 1;
    if k > 8 {
        return Err(invalid!("permutation search supports at most 8 labels"));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        let hits: usize = (0..k).map(|i| confusion[i][p[i]]).sum();
        best = best.max(hits);
    });
    Ok(best as f64 / predicted.len() as f64)
}

fn permute(p: &mut Vec<usize>, start: usize, visit: &mut dyn FnMut(&[usize])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, visit);
        p.swap(start, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_up_to_relabeling() {
        assert_eq!(assignment_accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(assignment_accuracy(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert!(assignment_accuracy(&[0], &[]).is_err());
    }
}
