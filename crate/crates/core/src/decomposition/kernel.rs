//! Kernel CCA and kernel EDMD.

use super::{chain, Estimator, TransferOperatorModel};
use crate::basis::{FeatureMap, KernelCentering};
use crate::error::{degenerate, insufficient, invalid, Result};
use crate::kernels::{gram_symmetric, gram_matrix, Kernel};
use crate::linalg::{eig_general, sym_eig_sorted, symmetrize};
use crate::prelude::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// How kernel CCA singular functions are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CcaNormalization {
    /// `(1/n) Σ φ(x_i)² = 1` over the training samples.
    #[default]
    EmpiricalMeasure,
    /// `αᵀ G α = 1` for the expansion coefficients `α`.
    GramNorm,
}

fn check(x: &DMatrix<f64>, y: &DMatrix<f64>, kernel: &Kernel, epsilon: f64) -> Result<()> {
    kernel.validate()?;
    if !(epsilon > 0.0) {
        return Err(invalid!("epsilon must be positive, got {epsilon}"));
    }
    if x.nrows() != y.nrows() {
        return Err(invalid!("X has {} samples, Y has {}", x.nrows(), y.nrows()));
    }
    if x.nrows() < 2 {
        return Err(insufficient!("need at least 2 samples"));
    }
    Ok(())
}

fn center_gram(g: &DMatrix<f64>) -> (DMatrix<f64>, KernelCentering) {
    let c = KernelCentering::from_gram(g);
    let mut out = g.clone();
    c.apply(&mut out);
    (symmetrize(&out), c)
}

/// Spectral pieces of a regularized Gram matrix: `G = Q Λ Qᵀ`.
struct RegularizedGram {
    q: DMatrix<f64>,
    lambda: Vec<f64>,
    shift: f64,
}

impl RegularizedGram {
    fn new(g: &DMatrix<f64>, shift: f64) -> Result<Self> {
        let eig = sym_eig_sorted(g)?;
        Ok(Self { lambda: eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect(), q: eig.eigenvectors, shift })
    }

    /// `Q diag(h(λ)) Qᵀ`.
    fn function(&self, h: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.q.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= h(self.lambda[j]);
        }
        symmetrize(&(scaled * self.q.transpose()))
    }

    /// `(G + sI)⁻¹ G`.
    fn ratio(&self) -> DMatrix<f64> {
        let s = self.shift;
        self.function(|l| l / (l + s))
    }

    fn ratio_sqrt(&self) -> DMatrix<f64> {
        let s = self.shift;
        self.function(|l| (l / (l + s)).sqrt())
    }

    fn inverse(&self) -> DMatrix<f64> {
        let s = self.shift;
        self.function(|l| 1.0 / (l + s))
    }
}

/// Kernel CCA with empirical-measure normalization; see
/// [`kernel_cca_fit_with`].
pub fn kernel_cca_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, kernel: &Kernel, n_components: usize, epsilon: f64) -> Result<TransferOperatorModel> {
    kernel_cca_fit_with(x, y, kernel, n_components, epsilon, CcaNormalization::default())
}

/// Regularized kernel CCA on centered Gram matrices.
///
/// With `R₀ = (G_X + nεI)⁻¹G_X` and `R₁` likewise, the training values `u`
/// of the leading singular functions solve `R₀R₁u = ρ²u`. The problem is
/// solved in the symmetric form `R₀^{1/2} R₁ R₀^{1/2}`. The returned model
/// has `f`, `g` evaluating the left and right singular functions directly,
/// `K = diag(ρ)` and `eigenvalues = ρ` (canonical correlations).
pub fn kernel_cca_fit_with(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    kernel: &Kernel,
    n_components: usize,
    epsilon: f64,
    normalization: CcaNormalization,
) -> Result<TransferOperatorModel> {
    check(x, y, kernel, epsilon)?;
    let n = x.nrows();
    if n_components == 0 || n_components > n {
        return Err(invalid!("n_components must be in 1..={n}"));
    }
    let (g0, c0) = center_gram(&gram_symmetric(kernel, x)?);
    let (g1, c1) = center_gram(&gram_symmetric(kernel, y)?);
    let shift = n as f64 * epsilon;
    let r0 = RegularizedGram::new(&g0, shift)?;
    let r1 = RegularizedGram::new(&g1, shift)?;
    let r0_sqrt = r0.ratio_sqrt();
    let r1_mat = r1.ratio();
    let s = symmetrize(&(&r0_sqrt * &r1_mat * &r0_sqrt));
    let eig = sym_eig_sorted(&s)?;
    let k = n_components;
    let lambdas: Vec<f64> = eig.eigenvalues.iter().take(k).map(|&l| l.max(0.0)).collect();
    if lambdas[0] <= 0.0 {
        return Err(degenerate!("kernel CCA found no positive correlation"));
    }
    let u_vals = &r0_sqrt * eig.eigenvectors.columns(0, k);
    let v_vals = &r1_mat * &u_vals;
    let r0_mat = r0.ratio();
    let inv0 = r0.inverse();
    let inv1 = r1.inverse();
    let mut alpha = DMatrix::zeros(n, k);
    let mut beta = DMatrix::zeros(n, k);
    for j in 0..k {
        let l = lambdas[j];
        if l <= 0.0 {
            continue;
        }
        let a = &inv0 * (&r1_mat * u_vals.column(j)) / l;
        let b = &inv1 * (&r0_mat * v_vals.column(j)) / l;
        let (sa, sb) = match normalization {
            CcaNormalization::EmpiricalMeasure => {
                let fa = &g0 * &a;
                let fb = &g1 * &b;
                (fa.norm() / (n as f64).sqrt(), fb.norm() / (n as f64).sqrt())
            }
            CcaNormalization::GramNorm => (a.dot(&(&g0 * &a)).sqrt(), b.dot(&(&g1 * &b)).sqrt()),
        };
        if sa > 0.0 {
            alpha.set_column(j, &(a / sa));
        }
        if sb > 0.0 {
            beta.set_column(j, &(b / sb));
        }
    }
    let rho: Vec<f64> = lambdas.iter().map(|l| l.sqrt()).collect();
    let embed = |centers: &DMatrix<f64>, centering| FeatureMap::KernelEmbedding { kernel: *kernel, centers: centers.clone(), centering: Some(centering) };
    let f = chain(embed(x, c0), FeatureMap::Affine { matrix: alpha, offset: DVector::zeros(n) });
    let g = chain(embed(y, c1), FeatureMap::Affine { matrix: beta, offset: DVector::zeros(n) });
    Ok(TransferOperatorModel {
        f,
        g,
        koopman: DMatrix::from_diagonal(&DVector::from_vec(rho.clone())),
        estimator: Estimator::KernelCca,
        eigenvalues: rho.iter().map(|&r| Complex64::new(r, 0.0)).collect(),
        modes: DMatrix::identity(k, k),
    })
}

/// Kernel EDMD: eigenpairs of `(G_XX + nεI)⁻¹ G_YX` with
/// `(G_YX)_{ti} = κ(y_t, x_i)` and no centering.
///
/// Eigenfunctions are `φ(x) = Σ_i ξ_i κ(x, x_i)`; the model keeps the real
/// parts of the `n_components` leading eigenvectors, scaled to unit
/// empirical norm on the training data.
pub fn kernel_edmd_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, kernel: &Kernel, epsilon: f64, n_components: usize) -> Result<TransferOperatorModel> {
    check(x, y, kernel, epsilon)?;
    let n = x.nrows();
    if n_components == 0 || n_components > n {
        return Err(invalid!("n_components must be in 1..={n}"));
    }
    let gxx = gram_symmetric(kernel, x)?;
    let gyx = gram_matrix(kernel, y, x)?;
    let reg = &gxx + DMatrix::identity(n, n) * (n as f64 * epsilon);
    let koopman = match reg.clone().cholesky() {
        Some(c) => c.solve(&gyx),
        None => reg.lu().solve(&gyx).ok_or_else(|| degenerate!("regularized Gram matrix is singular"))?,
    };
    let eig = eig_general(&koopman, n_components)?;
    let mut modes = eig.eigenvectors.map(|c| c.re);
    for mut col in modes.column_iter_mut() {
        let values = &gxx * &col;
        let norm = values.norm() / (n as f64).sqrt();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let f = FeatureMap::KernelEmbedding { kernel: *kernel, centers: x.clone(), centering: None };
    Ok(TransferOperatorModel { g: f.clone(), f, koopman, estimator: Estimator::KernelEdmd, eigenvalues: eig.eigenvalues, modes })
}
