//! Kernel-embedding based variational approach (KVAD).
//!
//! Features `χ` are whitened under the empirical measure of `X`; the
//! singular functions are the eigenvectors of `(1/n²) X_wᵀ G_yy X_w`, where
//! `G_yy` is the Gram matrix of the time-lagged samples. Together with the
//! constant function they define the density ansatz
//! `p̂(x, y) = f(x)ᵀ q(y)`, with `q` represented by weights on the samples
//! `y_t`.

use super::{chain, check_components, Projection};
use crate::basis::FeatureMap;
use crate::covariance::column_mean;
use crate::error::{degenerate, invalid, Result};
use crate::kernels::{gram_symmetric, Kernel};
use crate::linalg::{sym_eig_sorted, sym_inverse_sqrt, symmetrize};
use nalgebra::{DMatrix, DVector};

/// Eigenvalue cutoff used when whitening features.
pub const KVAD_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KvadModel {
    /// Singular functions (without the constant), dominant first.
    pub f: FeatureMap,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
    pub singular_values: DVector<f64>,
    /// `q_j(y_t)` as sample weights; column 0 belongs to the constant.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub q_values: DMatrix<f64>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub samples: DMatrix<f64>,
    /// `K = Σ_t q(y_t) f(y_t)ᵀ`, including the constant function.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub koopman: DMatrix<f64>,
    pub score: f64,
}

struct Whitened {
    mean: DVector<f64>,
    transform: DMatrix<f64>,
    data: DMatrix<f64>,
}

fn whiten(chi: &DMatrix<f64>, epsilon: f64) -> Result<Whitened> {
    if chi.iter().any(|v| !v.is_finite()) {
        return Err(degenerate!("feature matrix has non-finite entries"));
    }
    let n = chi.nrows() as f64;
    let mean = column_mean(chi);
    let mut xc = chi.clone();
    for mut row in xc.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(mean.iter()) {
            *v -= m;
        }
    }
    let cov = symmetrize(&(xc.transpose() * &xc / n));
    let w = sym_inverse_sqrt(&cov, epsilon)?;
    let data = &xc * w.transform.transpose();
    Ok(Whitened { mean, transform: w.transform, data })
}

fn with_constant(f: &DMatrix<f64>) -> DMatrix<f64> {
    let n = f.nrows();
    let mut out = DMatrix::from_element(n, f.ncols() + 1, 1.0);
    out.view_mut((0, 1), (n, f.ncols())).copy_from(f);
    out
}

/// Spectrum of `(1/n²) X_wᵀ G X_w`, descending and clipped at zero.
fn spectrum(xw: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = xw.nrows() as f64;
    if xw.ncols() == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let m = symmetrize(&(xw.transpose() * g * xw / (n * n)));
    let eig = sym_eig_sorted(&m)?;
    Ok((eig.eigenvalues.map(|v| v.max(0.0)), eig.eigenvectors))
}

fn check_shapes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.nrows() || x.nrows() < 2 {
        return Err(invalid!("need at least 2 paired samples, got {} and {}", x.nrows(), y.nrows()));
    }
    Ok(())
}

/// Fit KVAD with ansatz features `f` and embedding kernel `kernel`.
pub fn kvad_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, f: &FeatureMap, kernel: &Kernel) -> Result<KvadModel> {
    check_shapes(x, y)?;
    let n = x.nrows() as f64;
    let chi_x = f.transform(x)?;
    let chi_y = f.transform(y)?;
    let w = whiten(&chi_x, KVAD_EPSILON)?;
    let g = gram_symmetric(kernel, y)?;
    let (s, u) = spectrum(&w.data, &g)?;
    let score = g.mean() + s.sum();
    // Singular functions: (χ(x) − mean) Wᵀ U.
    let coeffs = w.transform.transpose() * &u;
    let sing = FeatureMap::Affine { matrix: coeffs, offset: w.mean.clone() };
    let fx = with_constant(&(&w.data * &u));
    let fy = with_constant(&sing.transform(&chi_y)?);
    let q_values = &fx / n;
    let koopman = q_values.transpose() * &fy;
    Ok(KvadModel { f: chain(f.clone(), sing), singular_values: s, q_values, samples: y.clone(), koopman, score })
}

impl KvadModel {
    /// Constant function followed by the singular functions.
    pub fn eval_with_constant(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(with_constant(&self.f.transform(x)?))
    }

    /// `p̂(x, y_t) = f(x)ᵀ q(y_t)` for every stored sample `y_t` (columns).
    pub fn transition_weights(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.eval_with_constant(x)? * self.q_values.transpose())
    }
}

impl Projection for KvadModel {
    fn rank(&self) -> usize {
        self.singular_values.len()
    }

    fn projection_map(&self, n_components: usize) -> Result<FeatureMap> {
        check_components(n_components, self.rank())?;
        let FeatureMap::Chain(maps) = &self.f else {
            return Err(crate::Error::Internal("unexpected KVAD feature layout".into()));
        };
        let mut maps = maps.clone();
        if let Some(FeatureMap::Affine { matrix, .. }) = maps.last_mut() {
            *matrix = matrix.columns(0, n_components).into_owned();
        }
        Ok(FeatureMap::Chain(maps))
    }
}

/// KVAD score of explicit features `fx` (rows paired with `y`):
/// `mean(G_yy) + Σ_i s_i`, where `s` is the spectrum of the whitened
/// embedding matrix.
pub fn kvad_score_features(fx: &DMatrix<f64>, y: &DMatrix<f64>, kernel: &Kernel) -> Result<f64> {
    check_shapes(fx, y)?;
    let w = whiten(fx, KVAD_EPSILON)?;
    let g = gram_symmetric(kernel, y)?;
    let (s, _) = spectrum(&w.data, &g)?;
    Ok(g.mean() + s.sum())
}

/// KVAD score of a model's full projection on `(x, y)`.
pub fn kvad_score<M: Projection + ?Sized>(model: &M, x: &DMatrix<f64>, y: &DMatrix<f64>, kernel: &Kernel) -> Result<f64> {
    let fx = model.project(x, model.rank())?;
    kvad_score_features(&fx, y, kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::monomial_features;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn data(n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng));
        let y = x.map(|v| 0.8 * v) + DMatrix::from_fn(n, 1, |_, _| 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        (x, y)
    }

    #[test]
    fn constant_ansatz_gives_baseline() {
        let (x, y) = data(200, 1);
        let k = Kernel::gaussian(1.0).unwrap();
        let m = kvad_fit(&x, &y, &monomial_features(1, 0).unwrap(), &k).unwrap();
        let g = gram_symmetric(&k, &y).unwrap();
        assert_eq!(m.rank(), 0);
        assert!((m.score - g.mean()).abs() < 1e-14);
        // The density ansatz reduces to the empirical marginal of Y.
        let w = m.transition_weights(&x.rows(0, 3).into_owned()).unwrap();
        assert!(w.iter().all(|&v| (v - 1.0 / 200.0).abs() < 1e-15));
        assert!((m.koopman[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn richer_ansatz_dominates_and_beats_shuffled() {
        let (x, y) = data(2000, 2);
        let k = Kernel::gaussian(1.0).unwrap();
        let psi = monomial_features(1, 3).unwrap();
        let m = kvad_fit(&x, &y, &psi, &k).unwrap();
        let base = kvad_fit(&x, &y, &monomial_features(1, 0).unwrap(), &k).unwrap();
        assert!(m.score >= base.score);
        let again = kvad_score(&m, &x, &y, &k).unwrap();
        assert_eq!(again, kvad_score(&m, &x, &y, &k).unwrap());
        assert!((again - m.score).abs() < 1e-10);
        let mut idx: Vec<usize> = (0..2000).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let shuffled = y.select_rows(idx.iter());
        assert!(kvad_score(&m, &x, &shuffled, &k).unwrap() <= m.score);
        // K maps the constant to itself.
        assert!((m.koopman[(0, 0)] - 1.0).abs() < 1e-12);
    }
}
