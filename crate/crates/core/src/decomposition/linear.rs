//! DMD, EDMD, TICA and VAMP.

use super::{CovarianceKoopmanModel, Estimator, TransferOperatorModel};
use crate::basis::{identity_features, FeatureMap};
use crate::covariance::{CovarianceAccumulator, CovarianceModel};
use crate::error::{degenerate, insufficient, invalid, Result};
use crate::linalg::{default_rcond, eig_general, generalized_eig_sym, pinv, sym_inverse_sqrt, truncated_svd};
use crate::prelude::*;
use nalgebra::DMatrix;

fn check_pairs(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(invalid!("X is {:?} but Y is {:?}", x.shape(), y.shape()));
    }
    if x.nrows() == 0 {
        return Err(insufficient!("no samples"));
    }
    Ok(())
}

/// Regression matrix `K` with `ψ(Y) ≈ ψ(X) K` (rows are frames).
fn regress(px: &DMatrix<f64>, py: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    if epsilon < 0.0 {
        return Err(invalid!("epsilon must be non-negative"));
    }
    if px.amax() == 0.0 {
        return Err(degenerate!("feature matrix is identically zero"));
    }
    if epsilon == 0.0 {
        return Ok(pinv(px, default_rcond(px)) * py);
    }
    let m = px.ncols();
    let gram = px.transpose() * px + DMatrix::identity(m, m) * epsilon;
    let rhs = px.transpose() * py;
    gram.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| degenerate!("regularized normal equations are not positive definite"))
}

fn from_regression(f: FeatureMap, koopman: DMatrix<f64>, estimator: Estimator) -> Result<TransferOperatorModel> {
    let m = koopman.nrows();
    let eig = eig_general(&koopman, m)?;
    let modes = eig.eigenvectors.map(|c| c.re);
    let mut modes = modes;
    for mut col in modes.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    Ok(TransferOperatorModel { g: f.clone(), f, koopman, estimator, eigenvalues: eig.eigenvalues, modes })
}

/// Dynamic mode decomposition: the least-squares linear map `y ≈ M x`.
///
/// The returned model stores `K = Mᵀ`; [`TransferOperatorModel::dmd_matrix`]
/// gives `M` back.
pub fn dmd_fit(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<TransferOperatorModel> {
    check_pairs(x, y)?;
    let k = pinv(x, default_rcond(x)) * y;
    from_regression(identity_features(x.ncols())?, k, Estimator::Dmd)
}

/// Extended DMD on the dictionary `psi` with ridge `epsilon` on the normal
/// equations (`epsilon = 0` gives the minimum-norm least-squares solution).
pub fn edmd_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, psi: &FeatureMap, epsilon: f64) -> Result<TransferOperatorModel> {
    check_pairs(x, y)?;
    let px = psi.transform(x)?;
    let py = psi.transform(y)?;
    let k = regress(&px, &py, epsilon)?;
    from_regression(psi.clone(), k, Estimator::Edmd)
}

impl TransferOperatorModel {
    /// `M = Kᵀ`, the matrix acting on column vectors of features.
    pub fn dmd_matrix(&self) -> DMatrix<f64> {
        self.koopman.transpose()
    }
}

/// TICA on symmetrized covariances: `C₀τ u = λ C₀₀ u`, eigenvalues
/// descending, `Uᵀ C₀₀ U = I`.
pub fn tica_fit(cov: &CovarianceModel, k: usize, epsilon: f64) -> Result<CovarianceKoopmanModel> {
    if !cov.symmetrized {
        return Err(invalid!("TICA assumes reversibility and needs symmetrized covariances"));
    }
    if k == 0 {
        return Err(invalid!("k must be positive"));
    }
    let eig = generalized_eig_sym(&cov.c0t, &cov.c00, epsilon)?;
    let k = k.min(eig.eigenvalues.len());
    let mut u = eig.eigenvectors.columns(0, k).into_owned();
    for mut col in u.column_iter_mut() {
        let n2 = (col.transpose() * &cov.c00 * &col)[(0, 0)];
        if n2 > 0.0 {
            col /= n2.sqrt();
        }
    }
    let d = cov.dim();
    Ok(CovarianceKoopmanModel {
        chi0: FeatureMap::Identity { dim: d },
        chi1: FeatureMap::Identity { dim: d },
        v: u.clone(),
        u,
        sigma: eig.eigenvalues.rows(0, k).into_owned(),
        covariances: cov.clone(),
        estimator: Estimator::Tica,
    })
}

/// VAMP: SVD of the whitened cross-covariance `C₀₀^{-1/2} C₀τ Cττ^{-1/2}`.
pub fn vamp_fit(cov: &CovarianceModel, k: usize, epsilon: f64) -> Result<CovarianceKoopmanModel> {
    if k == 0 {
        return Err(invalid!("k must be positive"));
    }
    let w0 = sym_inverse_sqrt(&cov.c00, epsilon)?;
    let w1 = sym_inverse_sqrt(&cov.ctt, epsilon)?;
    if w0.rank == 0 || w1.rank == 0 {
        return Err(degenerate!("covariance rank collapsed to zero (epsilon = {epsilon})"));
    }
    let m = &w0.transform * &cov.c0t * w1.transform.transpose();
    let k = k.min(w0.rank).min(w1.rank);
    let svd = truncated_svd(&m, k)?;
    let d = cov.dim();
    Ok(CovarianceKoopmanModel {
        chi0: FeatureMap::Identity { dim: d },
        chi1: FeatureMap::Identity { dim: d },
        u: w0.transform.transpose() * svd.u,
        v: w1.transform.transpose() * svd.v,
        sigma: svd.sigma,
        covariances: cov.clone(),
        estimator: Estimator::Vamp,
    })
}

impl CovarianceKoopmanModel {
    /// Record that the covariances were estimated on features `χ₀`, `χ₁`.
    pub fn with_basis(mut self, chi0: FeatureMap, chi1: FeatureMap) -> Self {
        self.chi0 = chi0;
        self.chi1 = chi1;
        self
    }
}

/// Singular values below this are treated as zero when whitening projected
/// test covariances.
const SCORE_EPSILON: f64 = 1e-10;

/// VAMP-r score. Without test covariances this is `Σ|σ_i|^r`; with them the
/// trained subspaces `U`, `V` are held fixed and re-whitened against the test
/// statistics. Mean-free models add one for the constant function.
pub fn vamp_score(model: &CovarianceKoopmanModel, r: u32, test_cov: Option<&CovarianceModel>) -> Result<f64> {
    if r == 0 {
        return Err(invalid!("r must be at least 1"));
    }
    let constant = if model.covariances.mean_removed { 1.0 } else { 0.0 };
    let Some(test) = test_cov else {
        return Ok(constant + model.sigma.iter().map(|s| s.abs().powi(r as i32)).sum::<f64>());
    };
    if test.dim() != model.u.nrows() {
        return Err(invalid!("test covariances have dimension {}, model expects {}", test.dim(), model.u.nrows()));
    }
    let (u, v) = (&model.u, &model.v);
    let s0 = u.transpose() * &test.c00 * u;
    let s1 = v.transpose() * &test.ctt * v;
    let a = u.transpose() * &test.c0t * v;
    let w0 = sym_inverse_sqrt(&crate::linalg::symmetrize(&s0), SCORE_EPSILON)?;
    let w1 = sym_inverse_sqrt(&crate::linalg::symmetrize(&s1), SCORE_EPSILON)?;
    if w0.rank == 0 || w1.rank == 0 {
        return Ok(constant);
    }
    let m = &w0.transform * a * w1.transform.transpose();
    let sv = m.singular_values();
    Ok(constant + sv.iter().map(|s| s.powi(r as i32)).sum::<f64>())
}

/// VAMP-r score of explicit feature pairs (mean-free estimate, constant
/// function included).
pub fn vamp_score_features(fx: &DMatrix<f64>, fy: &DMatrix<f64>, r: u32, epsilon: f64) -> Result<f64> {
    let cov = CovarianceModel::from_pairs(fx, fy, false, true)?;
    let model = vamp_fit(&cov, fx.ncols().max(1), epsilon)?;
    vamp_score(&model, r, None)
}

/// Cross-validated score summary.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CvScore {
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl CvScore {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let n = scores.len().max(1) as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        Self { scores, mean, std: var.sqrt() }
    }
}

/// k-fold cross-validated VAMP-r score over contiguous blocks of lagged pairs.
///
/// For each fold, `fit` receives the training pairs and returns a feature
/// map (typically the projection onto the model's dominant functions). A
/// VAMP model on the training features is then scored against the held-out
/// features with the trained subspace fixed.
pub fn vamp_cross_validate<F>(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    n_folds: usize,
    r: u32,
    epsilon: f64,
    mut fit: F,
) -> Result<CvScore>
where
    F: FnMut(&DMatrix<f64>, &DMatrix<f64>) -> Result<FeatureMap>,
{
    check_pairs(x, y)?;
    let n = x.nrows();
    if n_folds < 2 || n_folds > n {
        return Err(invalid!("need 2 ≤ folds ≤ {n}, got {n_folds}"));
    }
    let mut scores = Vec::with_capacity(n_folds);
    for fold in 0..n_folds {
        let start = fold * n / n_folds;
        let end = (fold + 1) * n / n_folds;
        let train: Vec<usize> = (0..start).chain(end..n).collect();
        let (tx, ty) = (x.select_rows(train.iter()), y.select_rows(train.iter()));
        let (vx, vy) = (x.rows(start, end - start).into_owned(), y.rows(start, end - start).into_owned());
        let map = fit(&tx, &ty)?;
        let mut acc = CovarianceAccumulator::new();
        acc.partial_fit(&map.transform(&tx)?, &map.transform(&ty)?)?;
        let train_cov = acc.finalize(false, true)?;
        let model = vamp_fit(&train_cov, train_cov.dim(), epsilon)?;
        let test_cov = CovarianceModel::from_pairs(&map.transform(&vx)?, &map.transform(&vy)?, false, true)?;
        scores.push(vamp_score(&model, r, Some(&test_cov))?);
    }
    Ok(CvScore::from_scores(scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{indicator_features, monomial_features};
    use crate::decomposition::Projection;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn dmd_scalar_and_known_map() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, -1.0]);
        let m = dmd_fit(&x, &(&x * 2.0)).unwrap();
        assert!((m.dmd_matrix()[(0, 0)] - 2.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = randn(&mut rng, 3, 3);
        let x = randn(&mut rng, 50, 3);
        let y = &x * a.transpose();
        let m = dmd_fit(&x, &y).unwrap();
        assert!((m.dmd_matrix() - &a).amax() < 1e-10);
        assert!(dmd_fit(&DMatrix::zeros(0, 2), &DMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn tica_is_transpose_of_dmd_on_raw_covariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = randn(&mut rng, 200, 3);
        let y = &x * DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, -0.2, 0.7, 0.1, 0.0, 0.3, 0.2]) + randn(&mut rng, 200, 3) * 0.1;
        let cov = CovarianceModel::from_pairs(&x, &y, false, false).unwrap();
        let m_tica = cov.c00.clone().try_inverse().unwrap() * &cov.c0t;
        let m_dmd = dmd_fit(&x, &y).unwrap().dmd_matrix();
        assert!((m_tica - m_dmd.transpose()).amax() < 1e-10);
    }

    #[test]
    fn edmd_identity_equals_dmd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = randn(&mut rng, 80, 4);
        let y = randn(&mut rng, 80, 4);
        let a = dmd_fit(&x, &y).unwrap();
        let b = edmd_fit(&x, &y, &identity_features(4).unwrap(), 0.0).unwrap();
        assert!((a.koopman - b.koopman).amax() < 1e-10);
    }

    #[test]
    fn edmd_indicator_is_row_normalized_counts() {
        let states = [0usize, 0, 1, 2, 1, 1, 0, 2, 2, 2, 1, 0, 0, 1];
        let px = indicator_features(&states[..states.len() - 1], 3).unwrap();
        let py = indicator_features(&states[1..], 3).unwrap();
        let k = regress(&px, &py, 0.0).unwrap();
        let mut counts = DMatrix::<f64>::zeros(3, 3);
        for w in states.windows(2) {
            counts[(w[0], w[1])] += 1.0;
        }
        for i in 0..3 {
            let s = counts.row(i).sum();
            for j in 0..3 {
                assert!((k[(i, j)] - counts[(i, j)] / s).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn edmd_linear_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(100, 1, |_, _| rng.random_range(-2.0..2.0));
        let y = &x * 0.5;
        let m = edmd_fit(&x, &y, &monomial_features(1, 1).unwrap(), 0.0).unwrap();
        let mut ev: Vec<f64> = m.eigenvalues.iter().map(|c| c.re).collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((ev[0] - 1.0).abs() < 1e-10 && (ev[1] - 0.5).abs() < 1e-10);
        assert!(edmd_fit(&x, &y, &FeatureMap::Affine { matrix: DMatrix::zeros(1, 1), offset: DVector::zeros(1) }, 0.0).is_err());
    }

    fn two_state_chain(n: usize, p: f64, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = 0;
        (0..n)
            .map(|_| {
                let out = s;
                if rng.random::<f64>() < p {
                    s = 1 - s;
                }
                out
            })
            .collect()
    }

    #[test]
    fn tica_two_state_jump_process() {
        // Noisy one-hot observations of a hidden chain switching with
        // probability 0.05; the hidden transition matrix has eigenvalues 1, 0.9.
        let states = two_state_chain(20_000, 0.05, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let traj = DMatrix::from_fn(states.len(), 2, |i, j| {
            let hit = if states[i] == j { 1.0 } else { 0.0 };
            hit + 0.05 * Distribution::<f64>::sample(&StandardNormal, &mut rng)
        });
        let cov = CovarianceModel::from_trajectory(&traj, 1, true, false).unwrap();
        let m = tica_fit(&cov, 2, 1e-10).unwrap();
        assert!((m.sigma[0] - 1.0).abs() < 0.05, "{}", m.sigma[0]);
        assert!((m.sigma[1] - 0.9).abs() < 0.05, "{}", m.sigma[1]);
        let ortho = m.u.transpose() * &cov.c00 * &m.u;
        assert!((ortho - DMatrix::<f64>::identity(2, 2)).amax() < 1e-8);
        let raw = CovarianceModel::from_trajectory(&traj, 1, false, true).unwrap();
        assert!(tica_fit(&raw, 1, 1e-10).is_err());
    }

    #[test]
    fn tica_white_noise_and_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let traj = randn(&mut rng, n, 3);
        let cov = CovarianceModel::from_trajectory(&traj, 1, true, true).unwrap();
        let m = tica_fit(&cov, 3, 1e-10).unwrap();
        assert!(m.sigma.iter().all(|l| l.abs() < 3.0 / (n as f64).sqrt()));

        let d = CovarianceModel {
            mean_0: DVector::zeros(2),
            mean_t: DVector::zeros(2),
            c00: DMatrix::identity(2, 2),
            c0t: DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.8])),
            ctt: DMatrix::identity(2, 2),
            n_pairs: 10,
            lag: Some(1),
            symmetrized: true,
            mean_removed: true,
        };
        let m = tica_fit(&d, 2, 1e-12).unwrap();
        assert!((m.sigma[0] - 0.8).abs() < 1e-14 && (m.sigma[1] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn vamp_matches_tica_on_reversible_covariances() {
        let states = two_state_chain(5000, 0.1, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let traj = DMatrix::from_fn(states.len(), 3, |i, j| states[i] as f64 * (j as f64 - 1.0) + 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let cov = CovarianceModel::from_trajectory(&traj, 1, true, true).unwrap();
        let t = tica_fit(&cov, 3, 1e-10).unwrap();
        let v = vamp_fit(&cov, 3, 1e-10).unwrap();
        let mut abs: Vec<f64> = t.sigma.iter().map(|s| s.abs()).collect();
        abs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in abs.iter().zip(v.sigma.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        let o0 = v.u.transpose() * &cov.c00 * &v.u;
        assert!((o0 - DMatrix::<f64>::identity(3, 3)).amax() < 1e-6);
    }

    #[test]
    fn vamp_constant_feature_has_unit_singular_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = DMatrix::from_fn(500, 1, |_, _| rng.random_range(-1.0..1.0));
        let y = x.map(|v| 0.8 * v + 0.1 * (v * 7.0).sin());
        let psi = monomial_features(1, 2).unwrap();
        let cov = CovarianceModel::from_pairs(&psi.transform(&x).unwrap(), &psi.transform(&y).unwrap(), false, false).unwrap();
        let m = vamp_fit(&cov, 3, 1e-12).unwrap();
        assert!((m.sigma[0] - 1.0).abs() < 1e-6);
        assert!(m.sigma.iter().all(|&s| (0.0..=1.0 + 1e-6).contains(&s)));
    }

    #[test]
    fn score_examples() {
        let mk = |s: &[f64]| CovarianceKoopmanModel {
            chi0: FeatureMap::Identity { dim: s.len() },
            chi1: FeatureMap::Identity { dim: s.len() },
            u: DMatrix::identity(s.len(), s.len()),
            v: DMatrix::identity(s.len(), s.len()),
            sigma: DVector::from_row_slice(s),
            covariances: CovarianceModel {
                mean_0: DVector::zeros(s.len()),
                mean_t: DVector::zeros(s.len()),
                c00: DMatrix::identity(s.len(), s.len()),
                c0t: DMatrix::identity(s.len(), s.len()),
                ctt: DMatrix::identity(s.len(), s.len()),
                n_pairs: 2,
                lag: None,
                symmetrized: false,
                mean_removed: false,
            },
            estimator: Estimator::Vamp,
        };
        assert!((vamp_score(&mk(&[1.0, 0.9]), 2, None).unwrap() - 1.81).abs() < 1e-12);
        assert_eq!(vamp_score(&mk(&[1.0]), 7, None).unwrap(), 1.0);
        assert!((vamp_score(&mk(&[1.0, 0.5, 0.25]), 1, None).unwrap() - 1.75).abs() < 1e-15);
        assert!(vamp_score(&mk(&[1.0]), 0, None).is_err());
    }

    #[test]
    fn nested_bases_never_lower_training_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut traj = DMatrix::zeros(3000, 2);
        let mut s = [0.0f64, 0.0];
        for i in 0..3000 {
            s[0] = 0.9 * s[0] + 0.3 * (s[1] * 2.0).sin() + 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            s[1] = 0.7 * s[1] + 0.2 * s[0] * s[0] + 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            traj[(i, 0)] = s[0];
            traj[(i, 1)] = s[1];
        }
        let mut prev = 0.0;
        for deg in 1..=4 {
            let psi = monomial_features(2, deg).unwrap();
            let f = psi.transform(&traj).unwrap();
            let (fx, fy) = crate::covariance::lagged_pairs(&f, 1);
            let score = vamp_score_features(&fx, &fy, 2, 1e-10).unwrap();
            assert!(score >= prev - 1e-8, "degree {deg}: {score} < {prev}");
            prev = score;
        }
    }

    #[test]
    fn projection_scoring_on_training_covariances_reproduces_training_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let traj = randn(&mut rng, 400, 3);
        let cov = CovarianceModel::from_trajectory(&traj, 2, false, true).unwrap();
        let m = vamp_fit(&cov, 3, 1e-12).unwrap();
        let a = vamp_score(&m, 2, None).unwrap();
        let b = vamp_score(&m, 2, Some(&cov)).unwrap();
        assert!((a - b).abs() < 1e-10);
        let p = m.project(&traj, 2).unwrap();
        assert_eq!(p.ncols(), 2);
        assert!(m.project(&traj, 4).is_err());
    }

    #[test]
    fn cross_validation_runs_on_contiguous_folds() {
        let states = two_state_chain(1000, 0.05, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let traj = DMatrix::from_fn(states.len(), 2, |i, j| if j == 0 { states[i] as f64 } else { 0.0 } + 0.2 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let (x, y) = crate::covariance::lagged_pairs(&traj, 1);
        let cv = vamp_cross_validate(&x, &y, 10, 2, 1e-10, |tx, ty| {
            let cov = CovarianceModel::from_pairs(tx, ty, false, true)?;
            vamp_fit(&cov, 1, 1e-10)?.projection_map(1)
        })
        .unwrap();
        assert_eq!(cv.scores.len(), 10);
        assert!(cv.mean > 1.5 && cv.mean <= 2.0 + 1e-9, "{:?}", cv);
        assert!(cv.std.is_finite());
    }
}
