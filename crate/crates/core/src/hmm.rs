//! Hidden Markov models with discrete or one-dimensional Gaussian outputs:
//! scaled forward–backward, Baum–Welch, Viterbi and an MSM-based initial
//! guess.

use crate::clustering::{kmeans_assign, kmeans_fit, KmeansConfig};
use crate::error::{invalid, Error, Result};
use crate::markov::{count_transitions, largest_connected_submodel, msm_mle, sample_chain, spectral_analysis, stationary_distribution, CountingMode, MarkovStateModel};
use crate::prelude::*;
use core::f64::consts::PI;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Lower bound on re-estimated Gaussian variances.
pub const VARIANCE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum OutputModel {
    /// Row-stochastic `n_hidden × n_observable`.
    Discrete {
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
        emission_matrix: DMatrix<f64>,
    },
    Gaussian {
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
        means: DVector<f64>,
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
        stds: DVector<f64>,
    },
}

/// One observation sequence.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum Observations {
    Discrete(Vec<usize>),
    Continuous(Vec<f64>),
}

impl Observations {
    pub fn len(&self) -> usize {
        match self {
            Observations::Discrete(o) => o.len(),
            Observations::Continuous(o) => o.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<Vec<usize>> for Observations {
    fn from(o: Vec<usize>) -> Self {
        Observations::Discrete(o)
    }
}

impl From<Vec<f64>> for Observations {
    fn from(o: Vec<f64>) -> Self {
        Observations::Continuous(o)
    }
}

fn gaussian_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    (-0.5 * z * z).exp() / (std * (2.0 * PI).sqrt())
}

impl OutputModel {
    pub fn n_hidden(&self) -> usize {
        match self {
            OutputModel::Discrete { emission_matrix } => emission_matrix.nrows(),
            OutputModel::Gaussian { means, .. } => means.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OutputModel::Discrete { emission_matrix } => {
                for (i, row) in emission_matrix.row_iter().enumerate() {
                    if row.iter().any(|&v| !(v >= 0.0)) || (row.sum() - 1.0).abs() > 1e-10 {
                        return Err(invalid!("emission row {i} is not a probability vector"));
                    }
                }
            }
            OutputModel::Gaussian { means, stds } => {
                if means.len() != stds.len() || stds.iter().any(|&s| !(s > 0.0)) || means.iter().any(|m| !m.is_finite()) {
                    return Err(invalid!("Gaussian outputs need finite means and positive stds of equal count"));
                }
            }
        }
        Ok(())
    }

    /// `T × n_hidden` matrix of output likelihoods.
    pub fn likelihoods(&self, obs: &Observations) -> Result<DMatrix<f64>> {
        let n = self.n_hidden();
        match (self, obs) {
            (OutputModel::Discrete { emission_matrix }, Observations::Discrete(o)) => {
                if let Some(&bad) = o.iter().find(|&&s| s >= emission_matrix.ncols()) {
                    return Err(invalid!("observed symbol {bad} outside the output alphabet"));
                }
                Ok(DMatrix::from_fn(o.len(), n, |t, i| emission_matrix[(i, o[t])]))
            }
            (OutputModel::Gaussian { means, stds }, Observations::Continuous(o)) => {
                if o.iter().any(|v| !v.is_finite()) {
                    return Err(invalid!("observations must be finite"));
                }
                Ok(DMatrix::from_fn(o.len(), n, |t, i| gaussian_pdf(o[t], means[i], stds[i])))
            }
            _ => Err(invalid!("observation type does not match the output model")),
        }
    }

    fn sample<R: Rng>(&self, state: usize, rng: &mut R) -> (Option<usize>, Option<f64>) {
        match self {
            OutputModel::Discrete { emission_matrix } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let row = emission_matrix.row(state);
                let mut pick = row.len() - 1;
                for (k, &p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                (Some(pick), None)
            }
            OutputModel::Gaussian { means, stds } => {
                let z: f64 = StandardNormal.sample(rng);
                (None, Some(means[state] + stds[state] * z))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HiddenMarkovModel {
    pub transition_model: MarkovStateModel,
    pub output_model: OutputModel,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
    pub initial_distribution: DVector<f64>,
}

fn hidden_msm(p: DMatrix<f64>, lag: usize, fallback: &DVector<f64>) -> MarkovStateModel {
    let mu = stationary_distribution(&p).unwrap_or_else(|_| fallback.clone());
    MarkovStateModel { transition_matrix: p, stationary_distribution: mu, lag, count_model: None, reversible: false }
}

impl HiddenMarkovModel {
    pub fn new(transition_matrix: DMatrix<f64>, output_model: OutputModel, initial_distribution: DVector<f64>) -> Result<Self> {
        let n = transition_matrix.nrows();
        if output_model.n_hidden() != n || initial_distribution.len() != n {
            return Err(invalid!("transition, output and initial models disagree on the number of hidden states"));
        }
        output_model.validate()?;
        if initial_distribution.iter().any(|&v| !(v >= 0.0)) || (initial_distribution.sum() - 1.0).abs() > 1e-10 {
            return Err(invalid!("initial distribution must be a probability vector"));
        }
        for (i, row) in transition_matrix.row_iter().enumerate() {
            if row.iter().any(|&v| !(v >= 0.0)) || (row.sum() - 1.0).abs() > 1e-10 {
                return Err(invalid!("transition row {i} is not a probability vector"));
            }
        }
        let transition_model = hidden_msm(transition_matrix, 1, &initial_distribution);
        Ok(Self { transition_model, output_model, initial_distribution })
    }

    pub fn n_hidden(&self) -> usize {
        self.transition_model.n_states()
    }

    pub fn transition_matrix(&self) -> &DMatrix<f64> {
        &self.transition_model.transition_matrix
    }

    /// Hidden path and observations of length `n_steps`.
    pub fn simulate(&self, n_steps: usize, seed: u64) -> (Vec<usize>, Observations) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut start = self.n_hidden() - 1;
        for (i, &p) in self.initial_distribution.iter().enumerate() {
            acc += p;
            if u < acc {
                start = i;
                break;
            }
        }
        let hidden = sample_chain(self.transition_matrix(), n_steps, start, &mut rng);
        let obs = match self.output_model {
            OutputModel::Discrete { .. } => Observations::Discrete(hidden.iter().map(|&s| self.output_model.sample(s, &mut rng).0.unwrap()).collect()),
            OutputModel::Gaussian { .. } => Observations::Continuous(hidden.iter().map(|&s| self.output_model.sample(s, &mut rng).1.unwrap()).collect()),
        };
        (hidden, obs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBackward {
    pub log_likelihood: f64,
    /// `T × n_hidden` posterior state probabilities.
    pub gammas: DMatrix<f64>,
    /// Expected transition counts `Σ_t P(h_t = i, h_{t+1} = j | O)`.
    pub transition_counts: DMatrix<f64>,
}

/// Scaled forward–backward recursions.
pub fn forward_backward(hmm: &HiddenMarkovModel, obs: &Observations) -> Result<ForwardBackward> {
    let b = hmm.output_model.likelihoods(obs)?;
    forward_backward_likelihoods(hmm.transition_matrix(), &hmm.initial_distribution, &b)
}

fn forward_backward_likelihoods(p: &DMatrix<f64>, pi: &DVector<f64>, b: &DMatrix<f64>) -> Result<ForwardBackward> {
    let (t_len, n) = (b.nrows(), b.ncols());
    if t_len == 0 {
        return Err(invalid!("empty observation sequence"));
    }
    let mut alpha = DMatrix::<f64>::zeros(t_len, n);
    let mut scale = vec![0.0; t_len];
    for t in 0..t_len {
        let mut c = 0.0;
        for j in 0..n {
            let prior = if t == 0 { pi[j] } else { (0..n).map(|i| alpha[(t - 1, i)] * p[(i, j)]).sum() };
            alpha[(t, j)] = prior * b[(t, j)];
            c += alpha[(t, j)];
        }
        if !(c > 0.0) {
            return Err(Error::ZeroLikelihood { frame: t });
        }
        scale[t] = c;
        for j in 0..n {
            alpha[(t, j)] /= c;
        }
    }
    let mut beta = DMatrix::<f64>::from_element(t_len, n, 1.0);
    let mut counts = DMatrix::<f64>::zeros(n, n);
    for t in (0..t_len - 1).rev() {
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                let w = p[(i, j)] * b[(t + 1, j)] * beta[(t + 1, j)] / scale[t + 1];
                s += w;
                counts[(i, j)] += alpha[(t, i)] * w;
            }
            beta[(t, i)] = s;
        }
    }
    let mut gammas = alpha.component_mul(&beta);
    for mut row in gammas.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let log_likelihood = scale.iter().map(|c| c.ln()).sum();
    Ok(ForwardBackward { log_likelihood, gammas, transition_counts: counts })
}

/// Log-likelihood of the observations.
pub fn log_likelihood(hmm: &HiddenMarkovModel, observations: &[Observations]) -> Result<f64> {
    observations.iter().map(|o| forward_backward(hmm, o).map(|fb| fb.log_likelihood)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaumWelchFit {
    pub model: HiddenMarkovModel,
    /// Log-likelihood of every visited parameter set, the last one being
    /// that of `model`.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

/// Expectation–maximization from `init`. Stops when the relative
/// log-likelihood improvement drops below `tolerance`; a decrease beyond
/// round-off is reported as an internal error.
pub fn baum_welch(init: &HiddenMarkovModel, observations: &[Observations], max_iter: usize, tolerance: f64) -> Result<BaumWelchFit> {
    if observations.is_empty() || observations.iter().all(Observations::is_empty) {
        return Err(invalid!("need at least one non-empty observation sequence"));
    }
    let n = init.n_hidden();
    let lag = init.transition_model.lag;
    let mut model = init.clone();
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    for iteration in 0..=max_iter {
        let mut ll = 0.0;
        let mut counts = DMatrix::<f64>::zeros(n, n);
        let mut initial = DVector::<f64>::zeros(n);
        let mut mass = DVector::<f64>::zeros(n);
        let mut stats: Vec<(DMatrix<f64>, &Observations)> = Vec::with_capacity(observations.len());
        for obs in observations.iter().filter(|o| !o.is_empty()) {
            let fb = forward_backward(&model, obs)?;
            ll += fb.log_likelihood;
            counts += &fb.transition_counts;
            initial += fb.gammas.row(0).transpose();
            for row in fb.gammas.row_iter() {
                mass += row.transpose();
            }
            stats.push((fb.gammas, obs));
        }
        if let Some(&prev) = trace.last() {
            if ll < prev - 1e-10 * prev.abs().max(1.0) {
                return Err(Error::Internal(format!("EM decreased the log-likelihood from {prev} to {ll} at iteration {iteration}")));
            }
            trace.push(ll);
            if ll - prev <= tolerance * prev.abs() {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        if iteration == max_iter {
            break;
        }
        if let Some(state) = mass.iter().position(|&m| !(m > 0.0)) {
            return Err(Error::DegenerateState { state });
        }
        let old_p = model.transition_matrix().clone();
        let p = DMatrix::from_fn(n, n, |i, j| {
            let row: f64 = counts.row(i).sum();
            if row > 0.0 {
                counts[(i, j)] / row
            } else {
                old_p[(i, j)]
            }
        });
        let initial = &initial / initial.sum();
        let output_model = match &model.output_model {
            OutputModel::Discrete { emission_matrix } => {
                let mut e = DMatrix::<f64>::zeros(n, emission_matrix.ncols());
                for (g, obs) in &stats {
                    let Observations::Discrete(o) = obs else { unreachable!() };
                    for (t, &s) in o.iter().enumerate() {
                        for i in 0..n {
                            e[(i, s)] += g[(t, i)];
                        }
                    }
                }
                for i in 0..n {
                    let s = e.row(i).sum();
                    e.row_mut(i).apply(|v| *v /= s);
                }
                OutputModel::Discrete { emission_matrix: e }
            }
            OutputModel::Gaussian { .. } => {
                let mut sum = DVector::<f64>::zeros(n);
                for (g, obs) in &stats {
                    let Observations::Continuous(o) = obs else { unreachable!() };
                    for (t, &x) in o.iter().enumerate() {
                        for i in 0..n {
                            sum[i] += g[(t, i)] * x;
                        }
                    }
                }
                let means = sum.component_div(&mass);
                let mut sq = DVector::<f64>::zeros(n);
                for (g, obs) in &stats {
                    let Observations::Continuous(o) = obs else { unreachable!() };
                    for (t, &x) in o.iter().enumerate() {
                        for i in 0..n {
                            sq[i] += g[(t, i)] * (x - means[i]).powi(2);
                        }
                    }
                }
                let stds = sq.component_div(&mass).map(|v| v.max(VARIANCE_FLOOR).sqrt());
                OutputModel::Gaussian { means, stds }
            }
        };
        let fallback = &mass / mass.sum();
        model = HiddenMarkovModel { transition_model: hidden_msm(p, lag, &fallback), output_model, initial_distribution: initial };
    }
    Ok(BaumWelchFit { model, log_likelihoods: trace, converged })
}

/// Most likely hidden path; ties go to the lower state index.
pub fn viterbi(hmm: &HiddenMarkovModel, obs: &Observations) -> Result<Vec<usize>> {
    let b = hmm.output_model.likelihoods(obs)?;
    let (t_len, n) = (b.nrows(), b.ncols());
    if t_len == 0 {
        return Err(invalid!("empty observation sequence"));
    }
    let lp = hmm.transition_matrix().map(f64::ln);
    let mut delta: Vec<f64> = (0..n).map(|i| hmm.initial_distribution[i].ln() + b[(0, i)].ln()).collect();
    if delta.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::ZeroLikelihood { frame: 0 });
    }
    let mut back = vec![vec![0usize; n]; t_len];
    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; n];
        for j in 0..n {
            let mut best = (0, f64::NEG_INFINITY);
            for i in 0..n {
                let v = delta[i] + lp[(i, j)];
                if v > best.1 {
                    best = (i, v);
                }
            }
            back[t][j] = best.0;
            next[j] = best.1 + b[(t, j)].ln();
        }
        if next.iter().all(|v| *v == f64::NEG_INFINITY) {
            return Err(Error::ZeroLikelihood { frame: t });
        }
        delta = next;
    }
    let mut state = 0;
    for i in 1..n {
        if delta[i] > delta[state] {
            state = i;
        }
    }
    let mut path = vec![0; t_len];
    path[t_len - 1] = state;
    for t in (1..t_len).rev() {
        state = back[t][state];
        path[t - 1] = state;
    }
    Ok(path)
}

/// Joint log-probability of a hidden path and the observations.
pub fn path_log_likelihood(hmm: &HiddenMarkovModel, obs: &Observations, path: &[usize]) -> Result<f64> {
    let b = hmm.output_model.likelihoods(obs)?;
    if path.len() != b.nrows() || path.is_empty() {
        return Err(invalid!("path length does not match the observations"));
    }
    let p = hmm.transition_matrix();
    let mut ll = hmm.initial_distribution[path[0]].ln() + b[(0, path[0])].ln();
    for t in 1..path.len() {
        ll += p[(path[t - 1], path[t])].ln() + b[(t, path[t])].ln();
    }
    Ok(ll)
}

/// Discrete HMM guess from an MSM on the observed states. Observed states
/// of the largest connected set are grouped by the signs of the dominant
/// non-trivial eigenvectors (two groups) or by k-means on them (more), and
/// each hidden state emits its group with weight `1 − floor` (stationary
/// weighted) plus `floor` spread uniformly over all symbols.
pub fn init_from_msm(observations: &[Vec<usize>], n_hidden: usize, lag: usize, floor: f64) -> Result<HiddenMarkovModel> {
    if !(0.0..1.0).contains(&floor) || (floor == 0.0 && n_hidden == 0) {
        return Err(invalid!("floor must be in [0, 1)"));
    }
    let cm = count_transitions(observations, lag, CountingMode::Sliding)?;
    let n_obs = cm.n_states();
    if n_hidden == 0 || n_hidden > n_obs {
        return Err(invalid!("n_hidden = {n_hidden} must be in 1..={n_obs}"));
    }
    let sub = largest_connected_submodel(&cm, true)?;
    let active = sub.state_symbols.clone();
    if active.len() < n_hidden {
        return Err(invalid!("the largest connected set has only {} states", active.len()));
    }
    let msm = msm_mle(&sub, true, 1e-12, 1_000_000)?;
    let m = active.len();
    let groups: Vec<usize> = if n_hidden == 1 {
        vec![0; m]
    } else if n_hidden == m {
        (0..m).collect()
    } else {
        let spec = spectral_analysis(&msm, n_hidden)?;
        let right = spec.right.map(|z| z.re);
        if n_hidden == 2 {
            let s0 = right[(0, 1)] >= 0.0;
            (0..m).map(|i| usize::from((right[(i, 1)] >= 0.0) != s0)).collect()
        } else {
            let coords = right.columns(1, n_hidden - 1).into_owned();
            let km = kmeans_fit(&coords, &KmeansConfig::new(n_hidden, 0).restarts(10))?;
            kmeans_assign(&km, &coords)?
        }
    };
    let mu = &msm.stationary_distribution;
    let mut membership_mass = vec![0.0; n_hidden];
    for i in 0..m {
        membership_mass[groups[i]] += mu[i];
    }
    if let Some(g) = membership_mass.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::DegenerateState { state: g });
    }
    let mut emission = DMatrix::from_element(n_hidden, n_obs, floor / n_obs as f64);
    for i in 0..m {
        emission[(groups[i], active[i])] += (1.0 - floor) * mu[i] / membership_mass[groups[i]];
    }
    // Coarse-grained hidden transition matrix from the stationary flux.
    let p = &msm.transition_matrix;
    let mut flux = DMatrix::<f64>::zeros(n_hidden, n_hidden);
    for i in 0..m {
        for j in 0..m {
            flux[(groups[i], groups[j])] += mu[i] * p[(i, j)];
        }
    }
    for i in 0..n_hidden {
        let s = flux.row(i).sum();
        flux.row_mut(i).apply(|v| *v /= s);
    }
    let initial = DVector::from_vec(membership_mass);
    let mut hmm = HiddenMarkovModel::new(flux, OutputModel::Discrete { emission_matrix: emission }, initial)?;
    hmm.transition_model.lag = lag;
    Ok(hmm)
}
