//! k-means with kmeans++ seeding and independent restarts.

use crate::error::{invalid, Error, Result};
use crate::prelude::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusteringModel {
    /// One center per row.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub centers: DMatrix<f64>,
    pub inertia: f64,
    pub n_iterations: usize,
    /// Seed of the restart that produced this model.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansConfig {
    pub k: usize,
    pub n_restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl KmeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, n_restarts: 1, max_iter: 300, tol: 1e-6, seed }
    }

    pub fn restarts(self, n_restarts: usize) -> Self {
        Self { n_restarts, ..self }
    }
}

fn sq_dist(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    (0..x.ncols()).map(|d| (x[(i, d)] - c[(j, d)]).powi(2)).sum()
}

/// Nearest center and its squared distance; ties go to the lower index.
fn nearest(x: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..centers.nrows() {
        let d = sq_dist(x, i, centers, j);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn has_k_distinct(x: &DMatrix<f64>, k: usize) -> bool {
    let mut distinct: Vec<usize> = Vec::new();
    for i in 0..x.nrows() {
        if distinct.iter().all(|&j| x.row(i) != x.row(j)) {
            distinct.push(i);
            if distinct.len() >= k {
                return true;
            }
        }
    }
    false
}

fn kmeans_pp(x: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = x.nrows();
    let mut centers = DMatrix::zeros(k, x.ncols());
    centers.row_mut(0).copy_from(&x.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let mut pick = n - 1;
        if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if u < acc {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.random_range(0..n);
        }
        centers.row_mut(c).copy_from(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x, i, &centers, c));
        }
    }
    centers
}

fn lloyd(x: &DMatrix<f64>, cfg: &KmeansConfig, seed: u64) -> Result<ClusteringModel> {
    let (n, dim, k) = (x.nrows(), x.ncols(), cfg.k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(x, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut previous = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        iterations += 1;
        let mut inertia = 0.0;
        for i in 0..n {
            let (j, d) = nearest(x, i, &centers);
            labels[i] = j;
            dists[i] = d;
            inertia += d;
        }
        if inertia > previous * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::Internal(format!("Lloyd step increased inertia from {previous} to {inertia}")));
        }
        previous = inertia;
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for d in 0..dim {
                sums[(labels[i], d)] += x[(i, d)];
            }
        }
        let mut new_centers = centers.clone();
        for j in 0..k {
            if counts[j] > 0 {
                for d in 0..dim {
                    new_centers[(j, d)] = sums[(j, d)] / counts[j] as f64;
                }
            } else {
                // Reseed at the point farthest from its current center.
                let far = (0..n).fold(0, |b, i| if dists[i] > dists[b] { i } else { b });
                new_centers.row_mut(j).copy_from(&x.row(far));
                dists[far] = 0.0;
            }
        }
        let shift = (&new_centers - &centers).row_iter().map(|r| r.norm()).fold(0.0, f64::max);
        centers = new_centers;
        if shift < cfg.tol {
            break;
        }
    }
    let inertia = (0..n).map(|i| nearest(x, i, &centers).1).sum();
    Ok(ClusteringModel { centers, inertia, n_iterations: iterations, seed })
}

/// Best-inertia k-means over `n_restarts` runs seeded `seed + restart`.
/// Ties go to the lowest restart index.
pub fn kmeans_fit(x: &DMatrix<f64>, cfg: &KmeansConfig) -> Result<ClusteringModel> {
    if cfg.k == 0 || cfg.n_restarts == 0 || cfg.max_iter == 0 {
        return Err(invalid!("k, n_restarts and max_iter must be positive"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("data contain non-finite values"));
    }
    if !has_k_distinct(x, cfg.k) {
        return Err(invalid!("fewer than k = {} distinct points", cfg.k));
    }
    let run = |r: usize| lloyd(x, cfg, cfg.seed.wrapping_add(r as u64));
    #[cfg(feature = "parallel")]
    let models: Vec<Result<ClusteringModel>> = {
        use rayon::prelude::*;
        (0..cfg.n_restarts).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let models: Vec<Result<ClusteringModel>> = (0..cfg.n_restarts).map(run).collect();
    let mut best: Option<ClusteringModel> = None;
    for m in models {
        let m = m?;
        if best.as_ref().is_none_or(|b| m.inertia < b.inertia) {
            best = Some(m);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Index of the nearest center per row; ties go to the lower index.
pub fn kmeans_assign(model: &ClusteringModel, x: &DMatrix<f64>) -> Result<Vec<usize>> {
    if x.ncols() != model.centers.ncols() {
        return Err(invalid!("data have {} columns, centers {}", x.ncols(), model.centers.ncols()));
    }
    Ok((0..x.nrows()).map(|i| nearest(x, i, &model.centers).0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn corners() {
        let x = DMatrix::from_row_slice(4, 2, &[0., 0., 1., 0., 0., 1., 1., 1.]);
        let m = kmeans_fit(&x, &KmeansConfig::new(4, 0)).unwrap();
        assert_eq!(m.inertia, 0.0);
        assert!(kmeans_fit(&x, &KmeansConfig::new(5, 0)).is_err());
        let dup = DMatrix::from_row_slice(3, 1, &[1., 1., 1.]);
        assert!(kmeans_fit(&dup, &KmeansConfig::new(2, 0)).is_err());
    }

    #[test]
    fn single_cluster_is_mean() {
        let x = DMatrix::from_row_slice(4, 1, &[1., 2., 3., 6.]);
        let m = kmeans_fit(&x, &KmeansConfig::new(1, 3)).unwrap();
        assert!((m.centers[(0, 0)] - 3.0).abs() < 1e-14);
        assert!((m.inertia - 14.0).abs() < 1e-12);
    }

    #[test]
    fn separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(1000, 2, |i, d| {
            let c = if i < 500 || d == 1 { 0.0 } else { 10.0 };
            c + 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng)
        });
        let m = kmeans_fit(&x, &KmeansConfig::new(2, 1).restarts(5)).unwrap();
        let labels = kmeans_assign(&m, &x).unwrap();
        for blob in [0..500, 500..1000] {
            let rows: Vec<usize> = blob.collect();
            let mean = x.select_rows(rows.iter()).row_mean();
            let c = m.centers.row(labels[rows[0]]);
            assert!((c - mean).amax() < 0.05);
        }
    }

    #[test]
    fn ties_and_assignment() {
        let m = ClusteringModel { centers: DMatrix::from_row_slice(2, 1, &[0., 2.]), inertia: 0.0, n_iterations: 0, seed: 0 };
        assert_eq!(kmeans_assign(&m, &DMatrix::from_row_slice(3, 1, &[1., 0., 2.])).unwrap(), vec![0, 0, 1]);
        assert!(kmeans_assign(&m, &DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn inertia_is_recheckable_and_best_of_restarts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(300, 3, |_, _| rng.random::<f64>());
        let cfg = KmeansConfig::new(6, 11).restarts(8);
        let best = kmeans_fit(&x, &cfg).unwrap();
        let labels = kmeans_assign(&best, &x).unwrap();
        let recomputed: f64 = labels.iter().enumerate().map(|(i, &j)| sq_dist(&x, i, &best.centers, j)).sum();
        assert!((recomputed - best.inertia).abs() < 1e-10);
        for r in 0..8 {
            let single = kmeans_fit(&x, &KmeansConfig { n_restarts: 1, seed: 11 + r, ..cfg }).unwrap();
            assert!(best.inertia <= single.inertia);
        }
        assert_eq!(kmeans_fit(&x, &cfg).unwrap(), best);
    }
}
