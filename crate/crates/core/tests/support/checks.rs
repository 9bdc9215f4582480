//! Cross-module checks shared by the integration tests and the acceptance
//! run. Each returns a short summary on success.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::time::Instant;
use timelag_core::basis::{identity_features, indicator_features, monomial_features};
use timelag_core::clustering::{kmeans_fit, KmeansConfig};
use timelag_core::covariance::{lagged_pairs, CovarianceAccumulator, CovarianceModel};
use timelag_core::datasets::{double_well_2d, BickleyConfig};
use timelag_core::decomposition::{dmd_fit, edmd_fit, vamp_fit, vamp_score};
use timelag_core::hmm::{
    baum_welch, forward_backward, path_log_likelihood, viterbi, HiddenMarkovModel, Observations, OutputModel,
};
use timelag_core::markov::{count_transitions, msm_mle, msm_to_koopman, CountingMode, MarkovStateModel, TransitionCountModel};
use timelag_core::sindy::{sindy_fit, TimeGrid};

pub type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() + 0.05);
    for mut row in p.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    p
}

pub fn s_lim() -> Check {
    let start = Instant::now();
    let p = DMatrix::from_row_slice(2, 2, &[0.95, 0.05, 0.05, 0.95]);
    let model = msm_to_koopman(&MarkovStateModel::new(p, 1).map_err(|e| e.to_string())?, false).map_err(|e| e.to_string())?;
    let score = vamp_score(&model, 2, None).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure((score - 1.81).abs() <= 1e-6, || format!("score {score}"))?;
    ensure(secs < 1.0, || format!("took {secs} s"))?;
    Ok(format!("VAMP-2 = {score:.9}"))
}

pub fn chunked_covariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let traj = gaussian_matrix(&mut rng, 1000, 3).map(|v| v + 2.0);
    let (x, y) = lagged_pairs(&traj, 3);
    let mut acc = CovarianceAccumulator::new();
    let mut start = 0;
    while start < x.nrows() {
        let len = 37.min(x.nrows() - start);
        acc.partial_fit(&x.rows(start, len).into_owned(), &y.rows(start, len).into_owned()).map_err(|e| e.to_string())?;
        start += len;
    }
    let mut worst: f64 = 0.0;
    for (sym, mean) in [(false, false), (false, true), (true, true)] {
        let chunked = acc.finalize(sym, mean).map_err(|e| e.to_string())?;
        let batch = CovarianceModel::from_pairs(&x, &y, sym, mean).map_err(|e| e.to_string())?;
        for (a, b) in [(&chunked.c00, &batch.c00), (&chunked.c0t, &batch.c0t), (&chunked.ctt, &batch.ctt)] {
            worst = worst.max((a - b).amax());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

pub fn dmd_vs_edmd_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = gaussian_matrix(&mut rng, 200, 4);
    let a = gaussian_matrix(&mut rng, 4, 4) * 0.3;
    let y = &x * a.transpose() + gaussian_matrix(&mut rng, 200, 4) * 0.01;
    let dmd = dmd_fit(&x, &y).map_err(|e| e.to_string())?;
    let edmd = edmd_fit(&x, &y, &identity_features(4).map_err(|e| e.to_string())?, 0.0).map_err(|e| e.to_string())?;
    let diff = (&dmd.koopman - &edmd.koopman).amax();
    ensure(diff <= 1e-10, || format!("max deviation {diff:e}"))?;
    Ok(format!("max deviation {diff:.1e}"))
}

pub fn sindy_discrete_vs_dmd() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 0.0, -0.1, 0.9, 0.05, 0.0, 0.0, 0.8]);
    let mut traj = DMatrix::zeros(300, 3);
    traj.row_mut(0).copy_from(&gaussian_matrix(&mut rng, 1, 3));
    for t in 1..300 {
        let next = &a * traj.row(t - 1).transpose() + gaussian_matrix(&mut rng, 3, 1) * 0.1;
        traj.row_mut(t).copy_from(&next.transpose());
    }
    let lib = identity_features(3).map_err(|e| e.to_string())?;
    let sindy = sindy_fit(&traj, TimeGrid::Uniform(1.0), &lib, 0.0, None, true).map_err(|e| e.to_string())?;
    let (x, y) = lagged_pairs(&traj, 1);
    let dmd = dmd_fit(&x, &y).map_err(|e| e.to_string())?;
    let diff = (&sindy.xi - dmd.dmd_matrix()).amax();
    ensure(diff <= 1e-10, || format!("max deviation {diff:e}"))?;
    Ok(format!("max deviation {diff:.1e}"))
}

pub fn edmd_indicator_vs_msm() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3 + seed as usize;
        let p = random_stochastic(&mut rng, n);
        let dtraj = MarkovStateModel::new(p, 1).map_err(|e| e.to_string())?.simulate(20_000, 0, seed).map_err(|e| e.to_string())?;
        let counts = count_transitions(&[dtraj.clone()], 1, CountingMode::Sliding).map_err(|e| e.to_string())?;
        let msm = msm_mle(&counts, false, 1e-12, 1).map_err(|e| e.to_string())?;
        let ind = indicator_features(&dtraj, n).map_err(|e| e.to_string())?;
        let (x, y) = lagged_pairs(&ind, 1);
        let edmd = edmd_fit(&x, &y, &identity_features(n).map_err(|e| e.to_string())?, 0.0).map_err(|e| e.to_string())?;
        worst = worst.max((&edmd.koopman - &msm.transition_matrix).amax());
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

fn random_discrete_hmm(rng: &mut ChaCha8Rng, n_hidden: usize, n_obs: usize) -> HiddenMarkovModel {
    let p = random_stochastic(rng, n_hidden);
    let e = random_stochastic(rng, n_obs.max(n_hidden)).rows(0, n_hidden).into_owned();
    let e = DMatrix::from_fn(n_hidden, n_obs, |i, j| e[(i, j % e.ncols())]);
    let mut e = e;
    for mut row in e.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let mut init = DVector::from_fn(n_hidden, |_, _| rng.random::<f64>() + 0.1);
    init /= init.sum();
    HiddenMarkovModel::new(p, OutputModel::Discrete { emission_matrix: e }, init).expect("valid HMM")
}

pub fn hmm_exhaustive() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let hmm = random_discrete_hmm(&mut rng, 2, 3);
        let obs: Observations = (0..10).map(|_| rng.random_range(0..3usize)).collect::<Vec<_>>().into();
        let mut total = 0.0;
        let mut marginals = DMatrix::<f64>::zeros(10, 2);
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for code in 0..1usize << 10 {
            let path: Vec<usize> = (0..10).map(|k| (code >> k) & 1).collect();
            let ll = path_log_likelihood(&hmm, &obs, &path).map_err(|e| e.to_string())?;
            total += ll.exp();
            for (t, &s) in path.iter().enumerate() {
                marginals[(t, s)] += ll.exp();
            }
            if ll > best.0 {
                best = (ll, path);
            }
        }
        let fb = forward_backward(&hmm, &obs).map_err(|e| e.to_string())?;
        worst = worst.max((fb.log_likelihood - total.ln()).abs());
        worst = worst.max((&fb.gammas - marginals / total).amax());
        let path = viterbi(&hmm, &obs).map_err(|e| e.to_string())?;
        let vll = path_log_likelihood(&hmm, &obs, &path).map_err(|e| e.to_string())?;
        worst = worst.max((vll - best.0).abs());
        ensure(path == best.1 || (vll - best.0).abs() <= 1e-12, || {
            format!("Viterbi path {path:?} ({vll}) differs from {:?} ({})", best.1, best.0)
        })?;
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

pub fn reversible_fits(n_fits: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_row, mut worst_db): (f64, f64) = (0.0, 0.0);
    for _ in 0..n_fits {
        let n = rng.random_range(2..7);
        let counts = DMatrix::from_fn(n, n, |i, j| if i == j || rng.random::<f64>() < 0.7 { rng.random_range(1..200u64) } else { 0 });
        let cm = TransitionCountModel { count_matrix: counts, lag: 1, counting_mode: CountingMode::Sliding, state_symbols: (0..n).collect() };
        let cm = timelag_core::markov::largest_connected_submodel(&cm, true).map_err(|e| e.to_string())?;
        let msm = msm_mle(&cm, true, 1e-12, 1_000_000).map_err(|e| e.to_string())?;
        let p = &msm.transition_matrix;
        let mu = &msm.stationary_distribution;
        ensure(p.iter().all(|&v| v >= 0.0), || "negative transition probability".into())?;
        for i in 0..p.nrows() {
            worst_row = worst_row.max((p.row(i).sum() - 1.0).abs());
            for j in 0..p.nrows() {
                worst_db = worst_db.max((mu[i] * p[(i, j)] - mu[j] * p[(j, i)]).abs());
            }
        }
    }
    ensure(worst_row <= 1e-12, || format!("row sum deviation {worst_row:e}"))?;
    ensure(worst_db <= 1e-10, || format!("detailed balance violation {worst_db:e}"))?;
    Ok(format!("{n_fits} fits, row sums {worst_row:.1e}, detailed balance {worst_db:.1e}"))
}

pub fn em_monotone(n_instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut steps = 0;
    for k in 0..n_instances {
        let n_hidden = 2 + k % 2;
        let truth = random_discrete_hmm(&mut rng, n_hidden, 4);
        let (_, obs) = truth.simulate(300, k as u64);
        let init = random_discrete_hmm(&mut rng, n_hidden, 4);
        let fit = baum_welch(&init, &[obs], 40, 0.0).map_err(|e| format!("instance {k}: {e}"))?;
        for w in fit.log_likelihoods.windows(2) {
            ensure(w[1] >= w[0] - 1e-10 * w[0].abs(), || format!("instance {k}: log-likelihood fell from {} to {}", w[0], w[1]))?;
            steps += 1;
        }
    }
    Ok(format!("{n_instances} instances, {steps} EM steps non-decreasing"))
}

pub fn lloyd_monotone() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..50u64 {
        let x = gaussian_matrix(&mut rng, 200, 2 + (k % 3) as usize);
        let cfg = KmeansConfig::new(2 + (k % 6) as usize, k).restarts(4);
        // A Lloyd step that raises the inertia surfaces as an error.
        let best = kmeans_fit(&x, &cfg).map_err(|e| e.to_string())?;
        for r in 0..4 {
            let single = kmeans_fit(&x, &KmeansConfig { n_restarts: 1, seed: k + r, ..cfg }).map_err(|e| e.to_string())?;
            ensure(best.inertia <= single.inertia, || "best-of-restarts inertia above a single restart".into())?;
        }
    }
    Ok("250 Lloyd runs on 50 datasets, inertia never increased".into())
}

pub fn nested_bases() -> Check {
    let traj = double_well_2d(8, 5000, 1e-3, 100).map_err(|e| e.to_string())?.frames;
    let (x, y) = lagged_pairs(&traj, 1);
    let mut scores = Vec::new();
    for degree in 1..=4 {
        let psi = monomial_features(2, degree).map_err(|e| e.to_string())?;
        let cov = CovarianceModel::from_pairs(&psi.transform(&x).map_err(|e| e.to_string())?, &psi.transform(&y).map_err(|e| e.to_string())?, false, true)
            .map_err(|e| e.to_string())?;
        let model = vamp_fit(&cov, cov.dim(), 1e-10).map_err(|e| e.to_string())?;
        scores.push(vamp_score(&model, 2, None).map_err(|e| e.to_string())?);
    }
    ensure(scores.windows(2).all(|w| w[1] >= w[0] - 1e-9), || format!("scores {scores:?}"))?;
    Ok(format!("VAMP-2 by degree {:?}", scores.iter().map(|s| (s * 1e4).round() / 1e4).collect::<Vec<_>>()))
}

pub fn bickley_field() -> Check {
    let c = BickleyConfig::default();
    let h = 1e-5;
    let (mut div, mut per): (f64, f64) = (0.0, 0.0);
    for i in 0..40 {
        for j in 0..17 {
            let (x, y, t) = (i as f64 * 0.5, -4.0 + j as f64 * 0.5, 0.37 * i as f64);
            let dudx = (c.velocity(x + h, y, t)[0] - c.velocity(x - h, y, t)[0]) / (2.0 * h);
            let dvdy = (c.velocity(x, y + h, t)[1] - c.velocity(x, y - h, t)[1]) / (2.0 * h);
            div = div.max((dudx + dvdy).abs());
            let (a, b) = (c.velocity(x, y, t), c.velocity(x + 20.0, y, t));
            per = per.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
    }
    ensure(div <= 1e-6, || format!("divergence {div:e}"))?;
    ensure(per <= 1e-12, || format!("periodicity {per:e}"))?;
    Ok(format!("divergence {div:.1e}, periodicity {per:.1e}"))
}

/// Two hidden states, `P = [[0.95, 0.05], [0.05, 0.95]]`, Gaussian outputs
/// at ±2 with std 0.7. EM from a vague start must recover `P` to 0.02.
pub fn baum_welch_recovery() -> Check {
    let start = Instant::now();
    let p = DMatrix::from_row_slice(2, 2, &[0.95, 0.05, 0.05, 0.95]);
    let truth = HiddenMarkovModel::new(
        p.clone(),
        OutputModel::Gaussian { means: DVector::from_vec(vec![-2.0, 2.0]), stds: DVector::from_vec(vec![0.7, 0.7]) },
        DVector::from_vec(vec![0.5, 0.5]),
    )
    .map_err(|e| e.to_string())?;
    let (_, obs) = truth.simulate(100_000, 9);
    let init = HiddenMarkovModel::new(
        DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.3, 0.7]),
        OutputModel::Gaussian { means: DVector::from_vec(vec![-1.0, 1.0]), stds: DVector::from_vec(vec![1.5, 1.5]) },
        DVector::from_vec(vec![0.5, 0.5]),
    )
    .map_err(|e| e.to_string())?;
    let fit = baum_welch(&init, &[obs], 500, 1e-10).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let diff = (fit.model.transition_matrix() - &p).amax();
    ensure(diff <= 0.02, || format!("max deviation {diff}"))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("max deviation {diff:.4}, {} iterations, {secs:.1} s", fit.log_likelihoods.len()))
}
