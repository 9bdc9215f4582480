//! Markov state models: transition counting, maximum-likelihood estimation,
//! spectral and kinetic analysis, conversion to a Koopman model and the
//! coherence score of two-frame assignments.

use crate::basis::FeatureMap;
use crate::covariance::CovarianceModel;
use crate::decomposition::{vamp_fit, CovarianceKoopmanModel, Estimator};
use crate::error::{degenerate, insufficient, invalid, Error, Result};
use crate::linalg::{complex_inverse, eig_general, fix_signs, sym_eig_sorted, symmetrize};
use crate::prelude::*;
use alloc::collections::VecDeque;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

/// Tolerance for row sums of stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CountingMode {
    /// Every pair `(s_i, s_{i+τ})`.
    #[default]
    Sliding,
    /// Pairs starting at `i = 0, τ, 2τ, …`.
    Strided,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransitionCountModel {
    #[cfg_attr(feature = "serde", serde(with = "counts_serde"))]
    pub count_matrix: DMatrix<u64>,
    pub lag: usize,
    pub counting_mode: CountingMode,
    /// Original state index of every local state.
    pub state_symbols: Vec<usize>,
}

#[cfg(feature = "serde")]
mod counts_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Dense {
        shape: [usize; 2],
        data: alloc::vec::Vec<u64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<u64>, s: S) -> Result<S::Ok, S::Error> {
        Dense { shape: [m.nrows(), m.ncols()], data: m.transpose().as_slice().to_vec() }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<u64>, D::Error> {
        let dense = Dense::deserialize(d)?;
        if dense.shape[0] * dense.shape[1] != dense.data.len() {
            return Err(serde::de::Error::custom("shape does not match data length"));
        }
        Ok(DMatrix::from_row_slice(dense.shape[0], dense.shape[1], &dense.data))
    }
}

impl TransitionCountModel {
    pub fn n_states(&self) -> usize {
        self.count_matrix.nrows()
    }

    pub fn counts_f64(&self) -> DMatrix<f64> {
        self.count_matrix.map(|c| c as f64)
    }

    pub fn total_count(&self) -> u64 {
        self.count_matrix.iter().sum()
    }

    /// Entrywise sum of two count models over the same state set.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.state_symbols != other.state_symbols || self.lag != other.lag || self.counting_mode != other.counting_mode {
            return Err(invalid!("count models differ in states, lag or counting mode"));
        }
        Ok(Self { count_matrix: &self.count_matrix + &other.count_matrix, ..self.clone() })
    }

    /// Restrict to the given local states (in the given order).
    pub fn submodel(&self, states: &[usize]) -> Result<Self> {
        if let Some(&s) = states.iter().find(|&&s| s >= self.n_states()) {
            return Err(invalid!("state {s} out of range"));
        }
        Ok(Self {
            count_matrix: self.count_matrix.select_rows(states.iter()).select_columns(states.iter()),
            lag: self.lag,
            counting_mode: self.counting_mode,
            state_symbols: states.iter().map(|&s| self.state_symbols[s]).collect(),
        })
    }
}

/// Count lagged transitions in discrete trajectories. The state space is
/// `0..=max state`; pairs never cross trajectory ends.
pub fn count_transitions<T: AsRef<[usize]>>(trajectories: &[T], lag: usize, mode: CountingMode) -> Result<TransitionCountModel> {
    if lag == 0 {
        return Err(invalid!("lag must be at least 1"));
    }
    if trajectories.iter().all(|t| t.as_ref().len() <= lag) {
        return Err(insufficient!("every trajectory is shorter than lag + 1 = {}", lag + 1));
    }
    let n = trajectories.iter().flat_map(|t| t.as_ref().iter()).copied().max().map_or(0, |m| m + 1);
    let mut counts = DMatrix::<u64>::zeros(n, n);
    let stride = match mode {
        CountingMode::Sliding => 1,
        CountingMode::Strided => lag,
    };
    for t in trajectories {
        let t = t.as_ref();
        let mut i = 0;
        while i + lag < t.len() {
            counts[(t[i], t[i + lag])] += 1;
            i += stride;
        }
    }
    Ok(TransitionCountModel { count_matrix: counts, lag, counting_mode: mode, state_symbols: (0..n).collect() })
}

fn reachable_from(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

/// Connected components (strong if `directed`, otherwise weak) of the graph
/// with an edge `i → j` iff `m[i][j] > 0`, each sorted, ordered by their
/// lowest member.
pub fn connected_components<T: PartialOrd + nalgebra::Scalar + num_traits::Zero>(m: &DMatrix<T>, directed: bool) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut fwd = vec![Vec::new(); n];
    let mut bwd = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if m[(i, j)] > T::zero() {
                fwd[i].push(j);
                bwd[j].push(i);
            }
        }
    }
    if !directed {
        for i in 0..n {
            let extra = bwd[i].clone();
            fwd[i].extend(extra);
        }
    }
    let mut assigned = vec![false; n];
    let mut components = Vec::new();
    for s in 0..n {
        if assigned[s] {
            continue;
        }
        let out = reachable_from(&fwd, s);
        let comp: Vec<usize> = if directed {
            let back = reachable_from(&bwd, s);
            (0..n).filter(|&j| out[j] && back[j]).collect()
        } else {
            (0..n).filter(|&j| out[j]).collect()
        };
        for &j in &comp {
            assigned[j] = true;
        }
        components.push(comp);
    }
    components
}

/// Restrict to the largest connected component; ties go to the component
/// containing the lowest state index.
pub fn largest_connected_submodel(cm: &TransitionCountModel, directed: bool) -> Result<TransitionCountModel> {
    if cm.n_states() == 0 {
        return Err(degenerate!("empty count matrix"));
    }
    let comps = connected_components(&cm.count_matrix, directed);
    let mut best = &comps[0];
    for c in &comps[1..] {
        if c.len() > best.len() {
            best = c;
        }
    }
    cm.submodel(best)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarkovStateModel {
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub transition_matrix: DMatrix<f64>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
    pub stationary_distribution: DVector<f64>,
    pub lag: usize,
    pub count_model: Option<TransitionCountModel>,
    pub reversible: bool,
}

fn check_stochastic(p: &DMatrix<f64>) -> Result<()> {
    if !p.is_square() || p.nrows() == 0 {
        return Err(invalid!("transition matrix must be square and non-empty"));
    }
    for (i, row) in p.row_iter().enumerate() {
        if row.iter().any(|&v| !(v >= 0.0)) || (row.sum() - 1.0).abs() > STOCHASTIC_TOL {
            return Err(invalid!("row {i} is not a probability vector"));
        }
    }
    Ok(())
}

fn is_reversible(p: &DMatrix<f64>, mu: &DVector<f64>, tol: f64) -> bool {
    let n = p.nrows();
    (0..n).all(|i| (0..i).all(|j| (mu[i] * p[(i, j)] - mu[j] * p[(j, i)]).abs() <= tol))
}

impl MarkovStateModel {
    /// Wrap a transition matrix; reversibility is detected from detailed
    /// balance with tolerance `1e-8`.
    pub fn new(transition_matrix: DMatrix<f64>, lag: usize) -> Result<Self> {
        check_stochastic(&transition_matrix)?;
        let mu = stationary_distribution(&transition_matrix)?;
        let reversible = is_reversible(&transition_matrix, &mu, 1e-8);
        Ok(Self { transition_matrix, stationary_distribution: mu, lag, count_model: None, reversible })
    }

    pub fn n_states(&self) -> usize {
        self.transition_matrix.nrows()
    }

    /// Sample a state sequence of length `n_steps` starting in `start`.
    pub fn simulate(&self, n_steps: usize, start: usize, seed: u64) -> Result<Vec<usize>> {
        if start >= self.n_states() {
            return Err(invalid!("start state {start} out of range"));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Ok(sample_chain(&self.transition_matrix, n_steps, start, &mut rng))
    }

    /// `Σ c_ij ln P_ij` of the attached (or given) counts.
    pub fn log_likelihood(&self, counts: &DMatrix<f64>) -> f64 {
        log_likelihood(counts, &self.transition_matrix)
    }
}

pub(crate) fn sample_chain<R: Rng>(p: &DMatrix<f64>, n_steps: usize, start: usize, rng: &mut R) -> Vec<usize> {
    let n = p.nrows();
    let mut out = Vec::with_capacity(n_steps);
    let mut s = start;
    for _ in 0..n_steps {
        out.push(s);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = n - 1;
        for j in 0..n {
            acc += p[(s, j)];
            if u < acc {
                next = j;
                break;
            }
        }
        s = next;
    }
    out
}

pub fn log_likelihood(counts: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    counts.iter().zip(p.iter()).filter(|(&c, _)| c > 0.0).map(|(&c, &q)| c * q.ln()).sum()
}

/// Maximum-likelihood MSM. Non-reversible estimates are row-normalized
/// counts; reversible ones come from the self-consistent iteration
/// `x_ij = (c_ij + c_ji) / (c_i/x_i + c_j/x_j)` stopped when the stationary
/// distribution changes by less than `tolerance` (relative).
pub fn msm_mle(cm: &TransitionCountModel, reversible: bool, tolerance: f64, max_iter: usize) -> Result<MarkovStateModel> {
    let c = cm.counts_f64();
    let n = c.nrows();
    if n == 0 {
        return Err(degenerate!("empty count matrix"));
    }
    let row_sums: Vec<f64> = c.row_iter().map(|r| r.sum()).collect();
    if let Some(i) = row_sums.iter().position(|&s| s <= 0.0) {
        return Err(invalid!("state {i} has no outgoing counts; restrict to a connected set first"));
    }
    let (p, mu) = if reversible {
        reversible_mle(&c, &row_sums, tolerance, max_iter)?
    } else {
        let p = DMatrix::from_fn(n, n, |i, j| c[(i, j)] / row_sums[i]);
        let mu = stationary_distribution(&p)?;
        (p, mu)
    };
    Ok(MarkovStateModel { transition_matrix: p, stationary_distribution: mu, lag: cm.lag, count_model: Some(cm.clone()), reversible })
}

fn reversible_mle(c: &DMatrix<f64>, row_sums: &[f64], tolerance: f64, max_iter: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = c.nrows();
    let csym = c + c.transpose();
    let mut x = csym.clone();
    let mut xi: Vec<f64> = x.row_iter().map(|r| r.sum()).collect();
    let mut pi: Vec<f64> = {
        let t: f64 = xi.iter().sum();
        xi.iter().map(|v| v / t).collect()
    };
    let mut converged = false;
    for _ in 0..max_iter {
        for i in 0..n {
            for j in 0..=i {
                let s = csym[(i, j)];
                let v = if s > 0.0 { s / (row_sums[i] / xi[i] + row_sums[j] / xi[j]) } else { 0.0 };
                x[(i, j)] = v;
                x[(j, i)] = v;
            }
        }
        xi = x.row_iter().map(|r| r.sum()).collect();
        let total: f64 = xi.iter().sum();
        let new_pi: Vec<f64> = xi.iter().map(|v| v / total).collect();
        let change = new_pi.iter().zip(&pi).map(|(a, b)| (a - b).abs() / a.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
        pi = new_pi;
        if change < tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure { what: "reversible MLE".into(), iterations: max_iter });
    }
    let p = DMatrix::from_fn(n, n, |i, j| x[(i, j)] / xi[i]);
    Ok((p, DVector::from_vec(pi)))
}

/// Stationary distribution of an irreducible row-stochastic matrix.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_stochastic(p)?;
    let n = p.nrows();
    if connected_components(p, true).len() > 1 {
        return Err(degenerate!("transition matrix is reducible"));
    }
    // Solve πᵀ(P − I) = 0 with the last equation replaced by Σπ = 1.
    let mut a = (p - DMatrix::<f64>::identity(n, n)).transpose();
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let mut mu = a.lu().solve(&b).ok_or_else(|| degenerate!("stationary system is singular"))?;
    mu.apply(|v| *v = v.max(0.0));
    let s = mu.sum();
    Ok(mu / s)
}

/// Eigenvalues with left and right eigenvectors (columns), sorted by
/// modulus descending.
///
/// For reversible models they are real and normalized so that
/// `lᵢᵀ rⱼ = δᵢⱼ`, `r₁ = 1` and `l₁ = μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsmSpectrum {
    pub eigenvalues: Vec<Complex64>,
    pub right: DMatrix<Complex64>,
    pub left: DMatrix<Complex64>,
}

impl MsmSpectrum {
    pub fn real_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|z| z.re).collect()
    }
}

pub fn spectral_analysis(msm: &MarkovStateModel, k: usize) -> Result<MsmSpectrum> {
    let n = msm.n_states();
    if k == 0 || k > n {
        return Err(invalid!("k must be in 1..={n}"));
    }
    let p = &msm.transition_matrix;
    let mu = &msm.stationary_distribution;
    if msm.reversible && mu.iter().all(|&m| m > 0.0) {
        let sq: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
        let s = symmetrize(&DMatrix::from_fn(n, n, |i, j| sq[i] * p[(i, j)] / sq[j]));
        let eig = sym_eig_sorted(&s)?;
        let moduli: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
        let order = crate::linalg::argsort_desc(&moduli);
        let mut w = eig.eigenvectors.select_columns(order[..k].iter());
        fix_signs(&mut w);
        let right = DMatrix::from_fn(n, k, |i, j| Complex64::new(w[(i, j)] / sq[i], 0.0));
        let left = DMatrix::from_fn(n, k, |i, j| Complex64::new(w[(i, j)] * sq[i], 0.0));
        let eigenvalues = order[..k].iter().map(|&o| Complex64::new(eig.eigenvalues[o], 0.0)).collect();
        return Ok(MsmSpectrum { eigenvalues, right, left });
    }
    let eig = eig_general(p, n)?;
    let inv = complex_inverse(&eig.eigenvectors).ok_or_else(|| degenerate!("transition matrix is not diagonalizable"))?;
    let right = eig.eigenvectors.columns(0, k).into_owned();
    let left = inv.rows(0, k).transpose();
    Ok(MsmSpectrum { eigenvalues: eig.eigenvalues[..k].to_vec(), right, left })
}

/// `−lag / ln|λ|`; infinite for `|λ| ≥ 1`.
pub fn implied_timescale(lambda: f64, lag: f64) -> f64 {
    let a = lambda.abs();
    if a >= 1.0 {
        f64::INFINITY
    } else {
        -lag / a.ln()
    }
}

/// Implied timescales of the `k` slowest non-stationary processes.
pub fn timescales(msm: &MarkovStateModel, k: usize) -> Result<Vec<f64>> {
    let n = msm.n_states();
    if k >= n {
        return Err(invalid!("k must be below the number of states ({n})"));
    }
    let spec = spectral_analysis(msm, k + 1)?;
    Ok(spec.eigenvalues[1..].iter().map(|z| implied_timescale(z.norm(), msm.lag as f64)).collect())
}

/// Mean first passage times into `target` (in units of time steps times
/// lag). States that may never hit the target get `f64::INFINITY`.
pub fn mfpt(msm: &MarkovStateModel, target: &[usize]) -> Result<Vec<f64>> {
    let n = msm.n_states();
    if target.is_empty() {
        return Err(invalid!("target set is empty"));
    }
    if let Some(&t) = target.iter().find(|&&t| t >= n) {
        return Err(invalid!("target state {t} out of range"));
    }
    let p = &msm.transition_matrix;
    let mut in_target = vec![false; n];
    for &t in target {
        in_target[t] = true;
    }
    // States that cannot reach the target at all.
    let mut bwd = vec![Vec::new(); n];
    let mut fwd = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] > 0.0 {
                bwd[j].push(i);
                if !in_target[i] {
                    fwd[i].push(j);
                }
            }
        }
    }
    let mut can_hit = vec![false; n];
    let mut queue: VecDeque<usize> = target.iter().copied().collect();
    for &t in target {
        can_hit[t] = true;
    }
    while let Some(j) = queue.pop_front() {
        for &i in &bwd[j] {
            if !can_hit[i] {
                can_hit[i] = true;
                queue.push_back(i);
            }
        }
    }
    // Anything that can wander into a dead region before hitting the target
    // has infinite expected passage time.
    let mut infinite = vec![false; n];
    for s in 0..n {
        if in_target[s] || infinite[s] {
            continue;
        }
        let reach = reachable_from(&fwd, s);
        if (0..n).any(|j| reach[j] && !can_hit[j]) {
            infinite[s] = true;
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| !in_target[i] && !infinite[i]).collect();
    let mut out = vec![0.0; n];
    for i in 0..n {
        if infinite[i] {
            out[i] = f64::INFINITY;
        }
    }
    if !free.is_empty() {
        let m = free.len();
        let a = DMatrix::from_fn(m, m, |r, c| if r == c { 1.0 } else { 0.0 } - p[(free[r], free[c])]);
        let b = DVector::from_element(m, msm.lag as f64);
        let x = a.lu().solve(&b).ok_or_else(|| degenerate!("passage time system is singular"))?;
        for (r, &i) in free.iter().enumerate() {
            out[i] = x[r];
        }
    }
    Ok(out)
}

/// Koopman model of an MSM in the indicator basis: `C₀₀ = diag(w)`,
/// `C₀τ = diag(w) P`, `Cττ = diag(wᵀP)` with `w` the stationary
/// distribution or, if `use_empirical`, the empirical state distribution of
/// the attached counts.
pub fn msm_to_koopman(msm: &MarkovStateModel, use_empirical: bool) -> Result<CovarianceKoopmanModel> {
    let n = msm.n_states();
    let w = if use_empirical {
        let cm = msm.count_model.as_ref().ok_or_else(|| invalid!("empirical weights need a count model"))?;
        let c = cm.counts_f64();
        let total = c.sum();
        if total <= 0.0 {
            return Err(insufficient!("count model is empty"));
        }
        DVector::from_iterator(n, c.row_iter().map(|r| r.sum() / total))
    } else {
        msm.stationary_distribution.clone()
    };
    let p = &msm.transition_matrix;
    let c00 = DMatrix::from_diagonal(&w);
    let c0t = &c00 * p;
    let ctt = DMatrix::from_diagonal(&(p.transpose() * &w));
    let cov = CovarianceModel {
        mean_0: w.clone(),
        mean_t: p.transpose() * &w,
        c00,
        c0t,
        ctt,
        n_pairs: msm.count_model.as_ref().map_or(0, |c| c.total_count() as usize),
        lag: Some(msm.lag),
        symmetrized: false,
        mean_removed: false,
    };
    let model = vamp_fit(&cov, n, 0.0)?;
    let model = model.with_basis(FeatureMap::Identity { dim: n }, FeatureMap::Identity { dim: n });
    Ok(CovarianceKoopmanModel { estimator: Estimator::Msm, ..model })
}

/// Per-set and expected coherence of a partition under a two-frame map.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoherenceScore {
    /// `None` for sets without members at the initial frame.
    pub per_set: Vec<Option<f64>>,
    pub expectation: f64,
    /// Set when some `per_set` entries are missing.
    pub missing_sets: bool,
}

/// Diagonal of the row-normalized two-frame count matrix, and its average
/// weighted by the initial set populations.
pub fn coherence_score(assignments_t0: &[usize], assignments_backmapped: &[usize], n_sets: usize) -> Result<CoherenceScore> {
    if assignments_t0.len() != assignments_backmapped.len() {
        return Err(invalid!("assignment sequences differ in length"));
    }
    if assignments_t0.is_empty() {
        return Err(insufficient!("no particles"));
    }
    let trajs: Vec<[usize; 2]> = assignments_t0.iter().zip(assignments_backmapped).map(|(&a, &b)| [a, b]).collect();
    if let Some(bad) = trajs.iter().flatten().find(|&&s| s >= n_sets) {
        return Err(invalid!("set index {bad} outside [0, {n_sets})"));
    }
    let mut counts = DMatrix::<f64>::zeros(n_sets, n_sets);
    for [a, b] in &trajs {
        counts[(*a, *b)] += 1.0;
    }
    let total = trajs.len() as f64;
    let mut per_set = Vec::with_capacity(n_sets);
    let mut expectation = 0.0;
    for i in 0..n_sets {
        let row = counts.row(i).sum();
        if row > 0.0 {
            let s = counts[(i, i)] / row;
            expectation += row / total * s;
            per_set.push(Some(s));
        } else {
            per_set.push(None);
        }
    }
    let missing_sets = per_set.iter().any(Option::is_none);
    Ok(CoherenceScore { per_set, expectation, missing_sets })
}
