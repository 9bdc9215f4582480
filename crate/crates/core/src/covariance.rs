//! Streaming estimation of instantaneous and time-lagged covariances.
//!
//! The accumulator keeps per-side means and centered co-moments and merges
//! chunks with the pairwise update of Chan, Golub and LeVeque, so any
//! partition of the same pair sequence gives the same result up to rounding.

use crate::error::{insufficient, invalid, Result};
use nalgebra::{DMatrix, DVector};

/// Running first and second moments over `(x, y)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAccumulator {
    dim: Option<usize>,
    n: usize,
    mean_x: DVector<f64>,
    mean_y: DVector<f64>,
    sxx: DMatrix<f64>,
    sxy: DMatrix<f64>,
    syy: DMatrix<f64>,
    lag: Option<usize>,
}

/// Finalized covariance estimate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CovarianceModel {
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
    pub mean_0: DVector<f64>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::vector"))]
    pub mean_t: DVector<f64>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub c00: DMatrix<f64>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub c0t: DMatrix<f64>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub ctt: DMatrix<f64>,
    pub n_pairs: usize,
    pub lag: Option<usize>,
    pub symmetrized: bool,
    /// Whether the means were subtracted. Mean-free models implicitly carry
    /// the constant function with singular value one.
    pub mean_removed: bool,
}

impl Default for CovarianceAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl CovarianceAccumulator {
    pub fn new() -> Self {
        Self {
            dim: None,
            n: 0,
            mean_x: DVector::zeros(0),
            mean_y: DVector::zeros(0),
            sxx: DMatrix::zeros(0, 0),
            sxy: DMatrix::zeros(0, 0),
            syy: DMatrix::zeros(0, 0),
            lag: None,
        }
    }

    /// Record the lag (in frames) the pairs were built with.
    pub fn with_lag(mut self, lag: usize) -> Self {
        self.lag = Some(lag);
        self
    }

    pub fn n_pairs(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// Add a chunk of paired observations (one pair per row).
    pub fn partial_fit(&mut self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<&mut Self> {
        if x.shape() != y.shape() {
            return Err(invalid!("chunk shapes differ: {:?} vs {:?}", x.shape(), y.shape()));
        }
        if let Some(d) = self.dim {
            if x.ncols() != d {
                return Err(invalid!("chunk has {} columns, accumulator has {d}", x.ncols()));
            }
        }
        if x.nrows() == 0 {
            return Ok(self);
        }
        let chunk = Self::from_chunk(x, y, self.lag);
        self.merge(&chunk)?;
        Ok(self)
    }

    /// Add all lag-`lag` pairs `(x_i, x_{i+lag})` of one trajectory.
    pub fn add_trajectory(&mut self, traj: &DMatrix<f64>, lag: usize) -> Result<&mut Self> {
        if self.lag.is_some_and(|l| l != lag) {
            return Err(invalid!("lag {lag} differs from the accumulator lag"));
        }
        self.lag = Some(lag);
        let (x, y) = lagged_pairs(traj, lag);
        self.partial_fit(&x, &y)
    }

    fn from_chunk(x: &DMatrix<f64>, y: &DMatrix<f64>, lag: Option<usize>) -> Self {
        let n = x.nrows();
        let mean_x = column_mean(x);
        let mean_y = column_mean(y);
        let xc = center(x, &mean_x);
        let yc = center(y, &mean_y);
        let xt = xc.transpose();
        Self {
            dim: Some(x.ncols()),
            n,
            sxx: &xt * &xc,
            sxy: &xt * &yc,
            syy: yc.transpose() * &yc,
            mean_x,
            mean_y,
            lag,
        }
    }

    /// Merge another accumulator into this one (associative).
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.n == 0 {
            return Ok(());
        }
        if self.n == 0 {
            let lag = self.lag.or(other.lag);
            *self = other.clone();
            self.lag = lag;
            return Ok(());
        }
        if self.dim != other.dim {
            return Err(invalid!("dimension mismatch: {:?} vs {:?}", self.dim, other.dim));
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let dx = &other.mean_x - &self.mean_x;
        let dy = &other.mean_y - &self.mean_y;
        let w = na * nb / n;
        self.sxx += &other.sxx + &dx * dx.transpose() * w;
        self.sxy += &other.sxy + &dx * dy.transpose() * w;
        self.syy += &other.syy + &dy * dy.transpose() * w;
        self.mean_x += &dx * (nb / n);
        self.mean_y += &dy * (nb / n);
        self.n += other.n;
        Ok(())
    }

    /// Produce covariance matrices with divisor `n − 1`.
    ///
    /// With `symmetrize`, both sides are pooled around the common mean and
    /// `c0t` is replaced by its symmetric part, so `c00 = ctt` and
    /// `c0t = c0tᵀ` hold exactly.
    pub fn finalize(&self, symmetrize: bool, remove_mean: bool) -> Result<CovarianceModel> {
        if self.n < 2 {
            return Err(insufficient!("need at least 2 pairs, have {}", self.n));
        }
        let n = self.n as f64;
        let denom = n - 1.0;
        let (mut sxx, mut sxy, mut syy) = (self.sxx.clone(), self.sxy.clone(), self.syy.clone());
        let (mut mx, mut my) = (self.mean_x.clone(), self.mean_y.clone());
        if symmetrize {
            let pooled = (&mx + &my) * 0.5;
            if remove_mean {
                let ax = &mx - &pooled;
                let ay = &my - &pooled;
                sxx += &ax * ax.transpose() * n;
                syy += &ay * ay.transpose() * n;
                sxy += &ax * ay.transpose() * n;
            }
            mx = pooled.clone();
            my = pooled;
        }
        if !remove_mean {
            // Raw second moments.
            sxx += &self.mean_x * self.mean_x.transpose() * n;
            syy += &self.mean_y * self.mean_y.transpose() * n;
            sxy += &self.mean_x * self.mean_y.transpose() * n;
        }
        let (c00, c0t, ctt) = if symmetrize {
            let d = sxx.nrows();
            let c = DMatrix::from_fn(d, d, |i, j| {
                let a = (sxx[(i, j)] + syy[(i, j)]) / (2.0 * denom);
                let b = (sxx[(j, i)] + syy[(j, i)]) / (2.0 * denom);
                0.5 * (a + b)
            });
            let c0t = DMatrix::from_fn(d, d, |i, j| 0.5 * (sxy[(i, j)] + sxy[(j, i)]) / denom);
            (c.clone(), c0t, c)
        } else {
            (sxx / denom, sxy / denom, syy / denom)
        };
        Ok(CovarianceModel {
            mean_0: mx,
            mean_t: my,
            c00,
            c0t,
            ctt,
            n_pairs: self.n,
            lag: self.lag,
            symmetrized: symmetrize,
            mean_removed: remove_mean,
        })
    }
}

impl CovarianceModel {
    pub fn dim(&self) -> usize {
        self.c00.nrows()
    }

    /// Covariances of a single trajectory at `lag` in one call.
    pub fn from_trajectory(traj: &DMatrix<f64>, lag: usize, symmetrize: bool, remove_mean: bool) -> Result<Self> {
        let mut acc = CovarianceAccumulator::new();
        acc.add_trajectory(traj, lag)?;
        acc.finalize(symmetrize, remove_mean)
    }

    /// Covariances of explicit pair matrices.
    pub fn from_pairs(x: &DMatrix<f64>, y: &DMatrix<f64>, symmetrize: bool, remove_mean: bool) -> Result<Self> {
        let mut acc = CovarianceAccumulator::new();
        acc.partial_fit(x, y)?;
        acc.finalize(symmetrize, remove_mean)
    }
}

/// Sliding-window lagged pairs `(x_i, x_{i+lag})`, `i = 0..n−lag`.
pub fn lagged_pairs(traj: &DMatrix<f64>, lag: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = traj.nrows();
    if lag >= n {
        return (DMatrix::zeros(0, traj.ncols()), DMatrix::zeros(0, traj.ncols()));
    }
    let m = n - lag;
    (traj.rows(0, m).into_owned(), traj.rows(lag, m).into_owned())
}

pub(crate) fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

pub(crate) fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    out
}
