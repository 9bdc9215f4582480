//! Explicit feature maps (ansatz sets) applied row-wise to data matrices.

use crate::covariance::CovarianceModel;
use crate::error::{invalid, Result};
use crate::kernels::{gram_matrix, Kernel};
use crate::linalg::{sym_inverse_sqrt, WhiteningTransform};
use crate::prelude::*;
use core::f64::consts::PI;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

/// Period of the cylinder embedding in the first coordinate.
pub const CYLINDER_PERIOD: f64 = 20.0;

/// An immutable feature map `R^dim_in → R^dim_out`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum FeatureMap {
    Identity { dim: usize },
    /// All monomials of total degree `≤ max_degree`, constant first.
    Monomial { dim: usize, max_degree: u32, exponents: Vec<Vec<u32>> },
    /// `x ↦ C^{-1/2}(x − μ)`.
    Whiten(WhiteningTransform),
    /// `(x, y) ↦ (cos 2πx/20, sin 2πx/20, y/3)`.
    Cylinder,
    /// `x ↦ W₂ exp(−(W₁ T(x) + b₁)²) + b₂` with `T` the cylinder embedding.
    RandomNet {
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
        w1: DMatrix<f64>,
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
        b1: DVector<f64>,
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
        w2: DMatrix<f64>,
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
        b2: DVector<f64>,
    },
    /// `(x, y) ↦ (x, y + coefficient·√|x|)`.
    SqrtShear { coefficient: f64 },
    /// `x ↦ Aᵀ(x − offset)`, `A` of shape `dim_in × dim_out`.
    Affine {
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
        matrix: DMatrix<f64>,
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
        offset: DVector<f64>,
    },
    /// `x ↦ (κ(x, c_1), …, κ(x, c_n))` over stored centers, optionally
    /// centered with the training Gram statistics.
    KernelEmbedding {
        kernel: Kernel,
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
        centers: DMatrix<f64>,
        centering: Option<KernelCentering>,
    },
    /// Apply maps left to right.
    Chain(Vec<FeatureMap>),
}

/// Statistics of a training Gram matrix `G` used to center new kernel
/// vectors consistently with `HGH`, `H = I − 11ᵀ/n`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KernelCentering {
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
    pub column_means: DVector<f64>,
    pub grand_mean: f64,
}

impl KernelCentering {
    pub fn from_gram(g: &DMatrix<f64>) -> Self {
        let n = g.nrows().max(1) as f64;
        let column_means = DVector::from_iterator(g.ncols(), g.column_iter().map(|c| c.sum() / n));
        let grand_mean = column_means.sum() / g.ncols().max(1) as f64;
        Self { column_means, grand_mean }
    }

    /// Center rows of a cross-Gram matrix `k(x_new, x_train)`.
    pub fn apply(&self, k: &mut DMatrix<f64>) {
        let m = k.ncols() as f64;
        for mut row in k.row_iter_mut() {
            let row_mean = row.sum() / m;
            for (v, c) in row.iter_mut().zip(self.column_means.iter()) {
                *v += self.grand_mean - row_mean - c;
            }
        }
    }
}

/// Identity features `Ψ(x) = x`.
pub fn identity_features(d: usize) -> Result<FeatureMap> {
    if d == 0 {
        return Err(invalid!("dimension must be at least 1"));
    }
    Ok(FeatureMap::Identity { dim: d })
}

/// Monomials up to `max_degree`, ordered by total degree and then by
/// exponent vector in descending lexicographic order (`1, x, y, x², xy, y²`).
pub fn monomial_features(d: usize, max_degree: u32) -> Result<FeatureMap> {
    if d == 0 {
        return Err(invalid!("dimension must be at least 1"));
    }
    let mut exponents = Vec::new();
    for total in 0..=max_degree {
        let mut current = vec![0u32; d];
        compositions(total, 0, &mut current, &mut exponents);
    }
    Ok(FeatureMap::Monomial { dim: d, max_degree, exponents })
}

fn compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        compositions(remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// One-hot encoding of discrete assignments.
pub fn indicator_features(assignments: &[usize], n_states: usize) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(assignments.len(), n_states);
    for (i, &s) in assignments.iter().enumerate() {
        if s >= n_states {
            return Err(invalid!("assignment {s} at frame {i} outside [0, {n_states})"));
        }
        out[(i, s)] = 1.0;
    }
    Ok(out)
}

/// `(cos(2πx/20), sin(2πx/20), y/3)`.
pub fn cylinder_embedding(x: f64, y: f64) -> [f64; 3] {
    let phase = 2.0 * PI * x / CYLINDER_PERIOD;
    [phase.cos(), phase.sin(), y / 3.0]
}

/// Randomly initialized single-hidden-layer network on the cylinder.
///
/// Weights are i.i.d. standard normal, biases uniform on `(−1, 1)`, drawn in
/// the order `W₁, b₁, W₂, b₂` (row-major) from a ChaCha8 stream.
pub fn random_feature_net(seed: u64, hidden: usize, out: usize) -> FeatureMap {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = |r: usize, c: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let vals: Vec<f64> = (0..r * c).map(|_| rng.sample(StandardNormal)).collect();
        DMatrix::from_row_slice(r, c, &vals)
    };
    let w1 = normal(hidden, 3, &mut rng);
    let b1 = DVector::from_fn(hidden, |_, _| rng.random_range(-1.0..1.0));
    let w2 = normal(out, hidden, &mut rng);
    let b2 = DVector::from_fn(out, |_, _| rng.random_range(-1.0..1.0));
    FeatureMap::RandomNet { w1, b1, w2, b2 }
}

impl FeatureMap {
    /// Whitening fitted on the rows of `data`, dropping directions with
    /// variance `≤ epsilon`.
    pub fn whitening(data: &DMatrix<f64>, epsilon: f64) -> Result<Self> {
        let cov = CovarianceModel::from_pairs(data, data, false, true)?;
        let mut w = sym_inverse_sqrt(&cov.c00, epsilon)?;
        w.mean = cov.mean_0;
        Ok(FeatureMap::Whiten(w))
    }

    /// Input dimension, `None` when any dimension is accepted.
    pub fn dimension_in(&self) -> Option<usize> {
        match self {
            FeatureMap::Identity { dim } | FeatureMap::Monomial { dim, .. } => Some(*dim),
            FeatureMap::Whiten(w) => Some(w.dim()),
            FeatureMap::Cylinder | FeatureMap::RandomNet { .. } | FeatureMap::SqrtShear { .. } => Some(2),
            FeatureMap::Affine { matrix, .. } => Some(matrix.nrows()),
            FeatureMap::KernelEmbedding { centers, .. } => Some(centers.ncols()),
            FeatureMap::Chain(maps) => maps.first().and_then(|m| m.dimension_in()),
        }
    }

    pub fn dimension_out(&self) -> usize {
        match self {
            FeatureMap::Identity { dim } => *dim,
            FeatureMap::Monomial { exponents, .. } => exponents.len(),
            FeatureMap::Whiten(w) => w.rank,
            FeatureMap::Cylinder => 3,
            FeatureMap::RandomNet { w2, .. } => w2.nrows(),
            FeatureMap::SqrtShear { .. } => 2,
            FeatureMap::Affine { matrix, .. } => matrix.ncols(),
            FeatureMap::KernelEmbedding { centers, .. } => centers.nrows(),
            FeatureMap::Chain(maps) => maps.last().map_or(0, |m| m.dimension_out()),
        }
    }

    /// Evaluate on a single point.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.transform(&m)?.iter().copied().collect())
    }

    /// Evaluate on every row of `data`.
    pub fn transform(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if let Some(d) = self.dimension_in() {
            if data.ncols() != d {
                return Err(invalid!("feature map expects {d} columns, got {}", data.ncols()));
            }
        }
        let n = data.nrows();
        Ok(match self {
            FeatureMap::Identity { .. } => data.clone(),
            FeatureMap::Monomial { exponents, .. } => DMatrix::from_fn(n, exponents.len(), |i, j| {
                exponents[j].iter().enumerate().map(|(k, &e)| data[(i, k)].powi(e as i32)).product()
            }),
            FeatureMap::Whiten(w) => w.apply_rows(data),
            FeatureMap::Cylinder => {
                let mut out = DMatrix::zeros(n, 3);
                for i in 0..n {
                    let t = cylinder_embedding(data[(i, 0)], data[(i, 1)]);
                    for (j, v) in t.into_iter().enumerate() {
                        out[(i, j)] = v;
                    }
                }
                out
            }
            FeatureMap::RandomNet { w1, b1, w2, b2 } => {
                let t = FeatureMap::Cylinder.transform(data)?;
                let mut h = t * w1.transpose();
                for mut row in h.row_iter_mut() {
                    for (v, b) in row.iter_mut().zip(b1.iter()) {
                        let z = *v + b;
                        *v = (-z * z).exp();
                    }
                }
                let mut out = h * w2.transpose();
                for mut row in out.row_iter_mut() {
                    for (v, b) in row.iter_mut().zip(b2.iter()) {
                        *v += b;
                    }
                }
                out
            }
            FeatureMap::SqrtShear { coefficient } => {
                let mut out = data.clone();
                for i in 0..n {
                    out[(i, 1)] += coefficient * data[(i, 0)].abs().sqrt();
                }
                out
            }
            FeatureMap::Affine { matrix, offset } => {
                let mut centered = data.clone();
                for mut row in centered.row_iter_mut() {
                    for (v, o) in row.iter_mut().zip(offset.iter()) {
                        *v -= o;
                    }
                }
                centered * matrix
            }
            FeatureMap::KernelEmbedding { kernel, centers, centering } => {
                let mut k = gram_matrix(kernel, data, centers)?;
                if let Some(c) = centering {
                    c.apply(&mut k);
                }
                k
            }
            FeatureMap::Chain(maps) => {
                let mut cur = data.clone();
                for m in maps {
                    cur = m.transform(&cur)?;
                }
                cur
            }
        })
    }
}
