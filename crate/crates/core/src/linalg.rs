//! Dense numerical kernels shared by the estimators: sorted symmetric
//! eigendecompositions, regularized whitening, generalized symmetric
//! eigenproblems, truncated SVDs and a general (non-symmetric) eigensolver.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. Data matrices elsewhere in the crate
//! store one observation per row.

use crate::error::{degenerate, invalid, Error, Result};
use crate::prelude::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Default relative tolerance for symmetry checks.
pub const SYMMETRY_RTOL: f64 = 1e-10;

/// Eigenvalues with column-aligned eigenvectors.
///
/// Symmetric problems sort by value, general problems by modulus; both
/// descending and stable with respect to the solver's order on ties.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// A rank-revealing whitening map `x ↦ transform · (x − mean)`.
///
/// `transform` has shape `rank × dim`; on the retained rank
/// `transform · C · transformᵀ = I`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WhiteningTransform {
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
    pub mean: DVector<f64>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub transform: DMatrix<f64>,
    pub rank: usize,
}

impl WhiteningTransform {
    pub fn dim(&self) -> usize {
        self.transform.ncols()
    }

    /// Whiten a single point.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.transform * (x - &self.mean)
    }

    /// Whiten every row of a data matrix.
    pub fn apply_rows(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = data.clone();
        for mut row in centered.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(self.mean.iter()) {
                *v -= m;
            }
        }
        centered * self.transform.transpose()
    }
}

/// Thin singular value decomposition truncated to `k` components.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.sigma) * self.v.transpose()
    }
}

/// Complex eigenpairs of a general real matrix, sorted by modulus descending.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralEigen {
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm right eigenvectors, one column per eigenvalue.
    pub eigenvectors: DMatrix<Complex64>,
}

pub fn is_symmetric(m: &DMatrix<f64>, rtol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rtol * scale {
                return false;
            }
        }
    }
    true
}

/// `(M + Mᵀ)/2`, exactly symmetric.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(invalid!("{what} must be square, got {}x{}", m.nrows(), m.ncols()));
    }
    if !is_symmetric(m, SYMMETRY_RTOL) {
        return Err(invalid!("{what} is not symmetric"));
    }
    Ok(())
}

/// Flip the sign of each column so that its largest-magnitude entry is positive.
pub(crate) fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs + 1e-14 * best_abs.abs() {
                best_abs = v.abs();
                best = i;
            }
        }
        if col.nrows() > 0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Indices that sort `keys` descending; stable on ties.
pub(crate) fn argsort_desc(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[b].partial_cmp(&keys[a]).unwrap_or(core::cmp::Ordering::Equal));
    idx
}

/// Symmetric eigendecomposition sorted by eigenvalue, descending.
pub fn sym_eig_sorted(a: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    check_symmetric(a, "matrix")?;
    let eig = symmetrize(a).symmetric_eigen();
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(degenerate!("non-finite eigenvalues"));
    }
    let order = argsort_desc(&values);
    let eigenvalues = DVector::from_iterator(order.len(), order.iter().map(|&i| values[i]));
    let mut eigenvectors = eig.eigenvectors.select_columns(order.iter());
    fix_signs(&mut eigenvectors);
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// Regularized inverse square root of a symmetric PSD matrix.
///
/// Eigenvalues `≤ epsilon` are discarded, so the result may be rank deficient.
pub fn sym_inverse_sqrt(c: &DMatrix<f64>, epsilon: f64) -> Result<WhiteningTransform> {
    if epsilon < 0.0 {
        return Err(invalid!("epsilon must be non-negative, got {epsilon}"));
    }
    let eig = sym_eig_sorted(c)?;
    let rank = eig.eigenvalues.iter().take_while(|&&v| v > epsilon).count();
    let dim = c.nrows();
    let mut transform = DMatrix::zeros(rank, dim);
    for r in 0..rank {
        let scale = 1.0 / eig.eigenvalues[r].sqrt();
        for j in 0..dim {
            transform[(r, j)] = eig.eigenvectors[(j, r)] * scale;
        }
    }
    Ok(WhiteningTransform { mean: DVector::zeros(dim), transform, rank })
}

/// Solve `A v = λ B v` for symmetric `A` and symmetric PSD `B` by whitening
/// with `B^{-1/2}` (eigenvalue cutoff `epsilon`).
///
/// Returns one eigenpair per retained rank of `B`, eigenvalues descending,
/// eigenvectors normalized to unit Euclidean length.
pub fn generalized_eig_sym(a: &DMatrix<f64>, b: &DMatrix<f64>, epsilon: f64) -> Result<SpectralDecomposition> {
    if a.shape() != b.shape() {
        return Err(invalid!("shape mismatch: A is {:?}, B is {:?}", a.shape(), b.shape()));
    }
    check_symmetric(a, "A")?;
    let w = sym_inverse_sqrt(b, epsilon)?;
    if w.rank == 0 {
        return Err(degenerate!("B has no eigenvalue above epsilon = {epsilon}"));
    }
    let reduced = symmetrize(&(&w.transform * a * w.transform.transpose()));
    let inner = sym_eig_sorted(&reduced)?;
    let mut vectors = w.transform.transpose() * &inner.eigenvectors;
    for mut col in vectors.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    fix_signs(&mut vectors);
    Ok(SpectralDecomposition { eigenvalues: inner.eigenvalues, eigenvectors: vectors })
}

/// Rank-`k` singular value decomposition, singular values descending.
pub fn truncated_svd(m: &DMatrix<f64>, k: usize) -> Result<TruncatedSvd> {
    let max_rank = m.nrows().min(m.ncols());
    if k == 0 {
        return Err(invalid!("k must be positive"));
    }
    if k > max_rank {
        return Err(invalid!("k = {k} exceeds min(rows, cols) = {max_rank}"));
    }
    let svd = m.clone().svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Internal("SVD did not return singular vectors".into()));
    };
    let values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let order = argsort_desc(&values);
    let keep = &order[..k];
    let sigma = DVector::from_iterator(k, keep.iter().map(|&i| values[i]));
    let mut u = u.select_columns(keep.iter());
    let mut v = v_t.select_rows(keep.iter()).transpose();
    // Align signs on the left vectors and carry the flip over to the right ones.
    for c in 0..k {
        let col = u.column(c);
        let imax = col.iamax();
        if col[imax] < 0.0 {
            u.column_mut(c).neg_mut();
            v.column_mut(c).neg_mut();
        }
    }
    Ok(TruncatedSvd { u, sigma, v })
}

/// Moore–Penrose pseudoinverse with relative singular value cutoff `rcond`.
pub fn pinv(m: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = rcond * smax;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut out = DMatrix::zeros(c, r);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += v_t.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    out
}

/// Relative singular value cutoff `max(m, n) · ε`.
pub(crate) fn default_rcond(a: &DMatrix<f64>) -> f64 {
    a.nrows().max(a.ncols()) as f64 * f64::EPSILON
}

/// Least-squares solution of `A X ≈ B` (SVD based, minimum norm).
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(invalid!("row mismatch: {} vs {}", a.nrows(), b.nrows()));
    }
    Ok(pinv(a, rcond) * b)
}

/// Eigendecomposition of a general real square matrix.
///
/// Eigenvalues come from the real Schur form; eigenvectors of the requested
/// leading `k` eigenvalues (by modulus) are obtained by back substitution on
/// the quasi-triangular factor. Passing `k = n` computes all of them.
pub fn eig_general(a: &DMatrix<f64>, k: usize) -> Result<GeneralEigen> {
    if !a.is_square() {
        return Err(invalid!("matrix must be square, got {:?}", a.shape()));
    }
    let n = a.nrows();
    if k > n {
        return Err(invalid!("requested {k} eigenpairs of a {n}x{n} matrix"));
    }
    if n == 0 {
        return Ok(GeneralEigen { eigenvalues: Vec::new(), eigenvectors: DMatrix::zeros(0, 0) });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(degenerate!("matrix has non-finite entries"));
    }
    // Nalgebra's Schur iteration occasionally stalls at machine-precision
    // tolerance on near-identity matrices; retry with looser deflation.
    let schur = [f64::EPSILON, 1e-14, 1e-12, 1e-10]
        .iter()
        .find_map(|&tol| a.clone().try_schur(tol, 20_000))
        .ok_or_else(|| Error::ConvergenceFailure { what: "real Schur decomposition".into(), iterations: 20_000 })?;
    let (q, t) = schur.unpack();

    // Walk the diagonal blocks of T.
    let mut values: Vec<(Complex64, usize)> = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let (a11, a12, a21, a22) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let mean = 0.5 * (a11 + a22);
            let disc = 0.25 * (a11 - a22) * (a11 - a22) + a12 * a21;
            if disc >= 0.0 {
                // Unreduced block with real eigenvalues; treat as two real values.
                let s = disc.sqrt();
                values.push((Complex64::new(mean + s, 0.0), i));
                values.push((Complex64::new(mean - s, 0.0), i));
            } else {
                let s = (-disc).sqrt();
                values.push((Complex64::new(mean, s), i));
                values.push((Complex64::new(mean, -s), i));
            }
            i += 2;
        } else {
            values.push((Complex64::new(t[(i, i)], 0.0), i));
            i += 1;
        }
    }

    let moduli: Vec<f64> = values.iter().map(|(v, _)| v.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Modulus descending, then larger real part, then positive imaginary part.
    order.sort_by(|&x, &y| {
        let (vx, vy) = (values[x].0, values[y].0);
        moduli[y]
            .total_cmp(&moduli[x])
            .then(vy.re.total_cmp(&vx.re))
            .then(vy.im.total_cmp(&vx.im))
    });
    let eigenvalues: Vec<Complex64> = order.iter().map(|&o| values[o].0).collect();

    let qc: DMatrix<Complex64> = q.map(|v| Complex64::new(v, 0.0));
    let mut eigenvectors = DMatrix::<Complex64>::zeros(n, k);
    let anorm = t.amax().max(f64::MIN_POSITIVE);
    for (col, &o) in order.iter().take(k).enumerate() {
        let (lambda, block) = values[o];
        let y = quasi_triangular_null_vector(&t, lambda, block, anorm);
        let mut v = &qc * y;
        normalize_phase(&mut v);
        eigenvectors.set_column(col, &v);
    }
    Ok(GeneralEigen { eigenvalues, eigenvectors })
}

fn normalize_phase(v: &mut DVector<Complex64>) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > best_abs * (1.0 + 1e-12) {
            best_abs = z.norm();
            best = i;
        }
    }
    let phase = v[best] / v[best].norm();
    let scale = phase.conj() / norm;
    for z in v.iter_mut() {
        *z *= scale;
        if z.im.abs() < 1e-15 * best_abs / norm {
            z.im = 0.0;
        }
    }
}

/// Null vector of `T − λI` for quasi-upper-triangular `T`, with support on
/// rows `0..=end` of the block starting at `block`.
fn quasi_triangular_null_vector(t: &DMatrix<f64>, lambda: Complex64, block: usize, anorm: f64) -> DVector<Complex64> {
    let n = t.nrows();
    let small = anorm * f64::EPSILON;
    let mut y = DVector::<Complex64>::zeros(n);
    let is_pair = block + 1 < n && t[(block + 1, block)] != 0.0;
    let top = if is_pair {
        let (a11, a12, a21, a22) = (t[(block, block)], t[(block, block + 1)], t[(block + 1, block)], t[(block + 1, block + 1)]);
        let c = |x: f64| Complex64::new(x, 0.0);
        // Either row of the singular 2x2 block gives the null direction.
        if a12.abs() >= a21.abs() {
            y[block] = c(a12);
            y[block + 1] = lambda - c(a11);
        } else {
            y[block] = lambda - c(a22);
            y[block + 1] = c(a21);
        }
        if y[block].norm() + y[block + 1].norm() == 0.0 {
            y[block] = c(1.0);
        }
        block
    } else {
        y[block] = Complex64::new(1.0, 0.0);
        block
    };
    let last = if is_pair { block + 1 } else { block };

    let mut i = top as isize - 1;
    while i >= 0 {
        let r = i as usize;
        let in_pair = r >= 1 && t[(r, r - 1)] != 0.0;
        if in_pair {
            let r0 = r - 1;
            let mut rhs0 = Complex64::new(0.0, 0.0);
            let mut rhs1 = Complex64::new(0.0, 0.0);
            for j in (r + 1)..=last {
                rhs0 += y[j] * t[(r0, j)];
                rhs1 += y[j] * t[(r, j)];
            }
            let m00 = Complex64::new(t[(r0, r0)], 0.0) - lambda;
            let m01 = Complex64::new(t[(r0, r)], 0.0);
            let m10 = Complex64::new(t[(r, r0)], 0.0);
            let m11 = Complex64::new(t[(r, r)], 0.0) - lambda;
            let mut det = m00 * m11 - m01 * m10;
            if det.norm() < small * small {
                det = Complex64::new(small * small, 0.0);
            }
            y[r0] = (-rhs0 * m11 + rhs1 * m01) / det;
            y[r] = (-rhs1 * m00 + rhs0 * m10) / det;
            i -= 2;
        } else {
            let mut rhs = Complex64::new(0.0, 0.0);
            for j in (r + 1)..=last {
                rhs += y[j] * t[(r, j)];
            }
            let mut denom = Complex64::new(t[(r, r)], 0.0) - lambda;
            if denom.norm() < small {
                denom = Complex64::new(small, 0.0);
            }
            y[r] = -rhs / denom;
            i -= 1;
        }
        // Rescale to keep the partial solution bounded.
        let ymax = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if ymax > 1e100 {
            for z in y.iter_mut() {
                *z /= ymax;
            }
        }
    }
    y
}

/// Solve `A x = b` for complex square `A` (LU with partial pivoting).
pub(crate) fn complex_inverse(a: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    a.clone().try_inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn inverse_sqrt_identity() {
        let w = sym_inverse_sqrt(&DMatrix::identity(3, 3), 1e-12).unwrap();
        assert_eq!(w.rank, 3);
        assert!((w.transform - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn inverse_sqrt_diagonal() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let w = sym_inverse_sqrt(&c, 1e-12).unwrap();
        assert_eq!(w.rank, 2);
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        assert!((w.transform - expected).amax() < 1e-14);
    }

    #[test]
    fn inverse_sqrt_truncates_below_cutoff() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1e-15]));
        let w = sym_inverse_sqrt(&c, 1e-10).unwrap();
        assert_eq!(w.rank, 1);
        assert!(close(w.transform[(0, 0)], 0.5, 1e-14));
        assert!(close(w.transform[(0, 1)], 0.0, 1e-14));
    }

    #[test]
    fn inverse_sqrt_rejects_bad_input() {
        let ns = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(sym_inverse_sqrt(&ns, 0.0), Err(Error::InvalidArgument(_))));
        let rect = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(sym_inverse_sqrt(&rect, 0.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn generalized_eig_examples() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.1]));
        let e = generalized_eig_sym(&a, &DMatrix::identity(2, 2), 1e-12).unwrap();
        assert!(close(e.eigenvalues[0], 0.9, 1e-14) && close(e.eigenvalues[1], 0.1, 1e-14));

        let e = generalized_eig_sym(&DMatrix::identity(3, 3), &DMatrix::identity(3, 3), 1e-12).unwrap();
        assert!(e.eigenvalues.iter().all(|&v| close(v, 1.0, 1e-14)));

        // Closed form for [[a, b], [b, a]]: a ± b.
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.25, 0.5]);
        let e = generalized_eig_sym(&a, &DMatrix::identity(2, 2), 1e-12).unwrap();
        assert!(close(e.eigenvalues[0], 0.75, 1e-14) && close(e.eigenvalues[1], 0.25, 1e-14));
    }

    #[test]
    fn generalized_eig_rank_collapse() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::zeros(2, 2);
        assert!(matches!(generalized_eig_sym(&a, &b, 1e-12), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn truncated_svd_examples() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let s = truncated_svd(&m, 2).unwrap();
        assert!(close(s.sigma[0], 3.0, 1e-14) && close(s.sigma[1], 2.0, 1e-14));

        let s = truncated_svd(&DMatrix::zeros(3, 2), 1).unwrap();
        assert_eq!(s.sigma[0], 0.0);

        assert!(matches!(truncated_svd(&m, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(truncated_svd(&m, 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn general_eig_rotation_has_complex_pair() {
        // 90 degree rotation scaled by 0.5 plus a real mode.
        let a = DMatrix::from_row_slice(3, 3, &[0.0, -0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.9]);
        let e = eig_general(&a, 3).unwrap();
        assert!(close(e.eigenvalues[0].re, 0.9, 1e-12));
        assert!(close(e.eigenvalues[1].norm(), 0.5, 1e-12));
        assert!(close(e.eigenvalues[1].im, 0.5, 1e-12));
        let ac = a.map(|v| Complex64::new(v, 0.0));
        for (i, lambda) in e.eigenvalues.iter().enumerate() {
            let v = e.eigenvectors.column(i).into_owned();
            let resid = &ac * &v - v.map(|z| z * lambda);
            assert!(resid.iter().all(|z| z.norm() < 1e-12));
        }
    }

    fn random_matrix(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn general_eig_residuals_on_random_matrices() {
        for seed in 0..20 {
            let n = 2 + (seed as usize % 9);
            let a = random_matrix(n, seed);
            let e = eig_general(&a, n).unwrap();
            let ac = a.map(|v| Complex64::new(v, 0.0));
            for i in 0..n {
                let v = e.eigenvectors.column(i).into_owned();
                let resid = &ac * &v - v.map(|z| z * e.eigenvalues[i]);
                let r = resid.iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(r < 1e-9, "seed {seed} pair {i}: residual {r}");
            }
            for w in e.eigenvalues.windows(2) {
                assert!(w[0].norm() >= w[1].norm() - 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn whitening_is_identity_on_spd(seed in 0u64..500, n in 1usize..6) {
            let b = random_matrix(n, seed);
            let c = &b * b.transpose() + DMatrix::identity(n, n) * 0.1;
            let w = sym_inverse_sqrt(&c, 1e-12).unwrap();
            let id = &w.transform * &c * w.transform.transpose();
            prop_assert!((id - DMatrix::<f64>::identity(n, n)).amax() < 1e-8);
        }

        #[test]
        fn generalized_eigenvalues_invariant_under_rotation(seed in 0u64..500, n in 2usize..6) {
            let m = random_matrix(n, seed);
            let a = symmetrize(&m);
            let bf = random_matrix(n, seed + 1000);
            let b = &bf * bf.transpose() + DMatrix::identity(n, n);
            let q = random_matrix(n, seed + 2000).qr().q();
            let a2 = symmetrize(&(&q * &a * q.transpose()));
            let b2 = symmetrize(&(&q * &b * q.transpose()));
            let e1 = generalized_eig_sym(&a, &b, 1e-12).unwrap();
            let e2 = generalized_eig_sym(&a2, &b2, 1e-12).unwrap();
            prop_assert!((e1.eigenvalues - e2.eigenvalues).amax() < 1e-10);
        }

        #[test]
        fn singular_values_match_gram_eigenvalues(seed in 0u64..500, r in 1usize..7, c in 1usize..7) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
            let k = r.min(c);
            let s = truncated_svd(&m, k).unwrap();
            let g = sym_eig_sorted(&(m.transpose() * &m)).unwrap();
            for i in 0..k {
                prop_assert!((s.sigma[i] - g.eigenvalues[i].max(0.0).sqrt()).abs() < 1e-10);
            }
        }
    }
}
