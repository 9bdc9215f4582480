//! Sparse identification of nonlinear dynamics: `ẋ ≈ Ξ Θ(x)` by
//! sequentially thresholded least squares.

use crate::basis::FeatureMap;
use crate::error::{invalid, Error, Result};
use crate::linalg::{default_rcond, lstsq};
use crate::prelude::*;
use nalgebra::{DMatrix, DVector};

/// Sample times: a uniform step or explicit, strictly increasing times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeGrid<'a> {
    Uniform(f64),
    Times(&'a [f64]),
}

impl TimeGrid<'_> {
    fn times(&self, n: usize) -> Result<Vec<f64>> {
        match *self {
            TimeGrid::Uniform(dt) => {
                if !(dt > 0.0) {
                    return Err(invalid!("dt must be positive"));
                }
                Ok((0..n).map(|i| i as f64 * dt).collect())
            }
            TimeGrid::Times(t) => {
                if t.len() != n {
                    return Err(invalid!("{} times for {n} samples", t.len()));
                }
                if t.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(invalid!("times must be strictly increasing"));
                }
                Ok(t.to_vec())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SindyModel {
    /// `state_dim × n_library`.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub xi: DMatrix<f64>,
    pub library: FeatureMap,
    pub feature_names: Vec<String>,
    pub discrete_time: bool,
    /// Target dimensions whose active set emptied during thresholding.
    pub empty_rows: Vec<bool>,
}

/// Forward differences; the last row repeats the backward difference.
pub fn finite_difference(x: &DMatrix<f64>, grid: TimeGrid) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(invalid!("need at least 2 samples"));
    }
    let t = grid.times(n)?;
    let mut out = DMatrix::zeros(n, x.ncols());
    for i in 0..n {
        let (a, b) = if i + 1 < n { (i, i + 1) } else { (n - 2, n - 1) };
        let dt = t[b] - t[a];
        for j in 0..x.ncols() {
            out[(i, j)] = (x[(b, j)] - x[(a, j)]) / dt;
        }
    }
    Ok(out)
}

/// Sparse coefficients and the flags of targets whose active set emptied.
#[derive(Debug, Clone, PartialEq)]
pub struct StlsqResult {
    pub xi: DMatrix<f64>,
    pub empty_rows: Vec<bool>,
}

fn solve_active(theta: &DMatrix<f64>, target: &DMatrix<f64>, active: &[usize], ridge: f64) -> Result<DVector<f64>> {
    let sub = theta.select_columns(active.iter());
    let coef = if ridge > 0.0 {
        let k = active.len();
        let a = sub.transpose() * &sub + DMatrix::<f64>::identity(k, k) * ridge;
        let b = sub.transpose() * target;
        a.cholesky().ok_or_else(|| Error::Internal("ridge system not positive definite".into()))?.solve(&b)
    } else {
        lstsq(&sub, target, default_rcond(&sub))?
    };
    Ok(coef.column(0).into_owned())
}

/// Sequentially thresholded least squares, independently per target
/// column of `dx`: fit on the active set, drop coefficients below
/// `threshold`, repeat until the pattern is fixed or `max_iter` rounds.
pub fn stlsq(theta: &DMatrix<f64>, dx: &DMatrix<f64>, threshold: f64, max_iter: usize, ridge: f64) -> Result<StlsqResult> {
    if theta.nrows() != dx.nrows() {
        return Err(invalid!("library has {} rows, derivatives {}", theta.nrows(), dx.nrows()));
    }
    if !(threshold >= 0.0) || !(ridge >= 0.0) {
        return Err(invalid!("threshold and ridge must be non-negative"));
    }
    let (l, d) = (theta.ncols(), dx.ncols());
    let mut xi = DMatrix::zeros(d, l);
    let mut empty_rows = vec![false; d];
    for j in 0..d {
        let target = dx.column(j).into_owned();
        let target = DMatrix::from_column_slice(target.len(), 1, target.as_slice());
        let mut active: Vec<usize> = (0..l).collect();
        let mut coef = solve_active(theta, &target, &active, ridge)?;
        for _ in 0..max_iter.max(1) {
            let keep: Vec<usize> = (0..active.len()).filter(|&k| coef[k].abs() >= threshold).collect();
            if keep.len() == active.len() {
                break;
            }
            active = keep.iter().map(|&k| active[k]).collect();
            if active.is_empty() {
                break;
            }
            coef = solve_active(theta, &target, &active, ridge)?;
        }
        if active.is_empty() {
            empty_rows[j] = true;
            continue;
        }
        for (k, &c) in active.iter().enumerate() {
            xi[(j, c)] = coef[k];
        }
    }
    Ok(StlsqResult { xi, empty_rows })
}

/// Human-readable names of the library functions.
pub fn feature_names(library: &FeatureMap) -> Vec<String> {
    match library {
        FeatureMap::Identity { dim } => (0..*dim).map(|i| format!("x{i}")).collect(),
        FeatureMap::Monomial { exponents, .. } => exponents
            .iter()
            .map(|e| {
                let parts: Vec<String> = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0)
                    .map(|(i, &p)| if p == 1 { format!("x{i}") } else { format!("x{i}^{p}") })
                    .collect();
                if parts.is_empty() {
                    "1".into()
                } else {
                    parts.join(" ")
                }
            })
            .collect(),
        other => (0..other.dimension_out()).map(|i| format!("f{i}")).collect(),
    }
}

/// Fit `ẋ ≈ Ξ Θ(x)`. Derivatives are `dx` if given, else forward
/// differences; with `discrete_time` the targets are the next states.
pub fn sindy_fit(x: &DMatrix<f64>, grid: TimeGrid, library: &FeatureMap, threshold: f64, dx: Option<&DMatrix<f64>>, discrete_time: bool) -> Result<SindyModel> {
    if x.nrows() < 2 {
        return Err(invalid!("need at least 2 samples"));
    }
    let (inputs, targets) = if discrete_time {
        let n = x.nrows() - 1;
        (x.rows(0, n).into_owned(), x.rows(1, n).into_owned())
    } else {
        let d = match dx {
            Some(d) => {
                if d.shape() != x.shape() {
                    return Err(invalid!("derivatives have shape {:?}, data {:?}", d.shape(), x.shape()));
                }
                d.clone()
            }
            None => finite_difference(x, grid)?,
        };
        (x.clone(), d)
    };
    let theta = library.transform(&inputs)?;
    let fit = stlsq(&theta, &targets, threshold, 20, 0.0)?;
    Ok(SindyModel { xi: fit.xi, library: library.clone(), feature_names: feature_names(library), discrete_time, empty_rows: fit.empty_rows })
}

impl SindyModel {
    pub fn state_dim(&self) -> usize {
        self.xi.nrows()
    }

    /// Indices `(dimension, library term)` of the nonzero coefficients.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.xi.nrows() {
            for j in 0..self.xi.ncols() {
                if self.xi[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// One line per dimension, e.g. `x0' = -1 x1 - 1 x2`.
    pub fn equations(&self, precision: usize) -> Vec<String> {
        let lhs = if self.discrete_time { "+" } else { "'" };
        (0..self.state_dim())
            .map(|i| {
                let terms: Vec<String> = (0..self.xi.ncols())
                    .filter(|&j| self.xi[(i, j)] != 0.0)
                    .map(|j| match self.feature_names[j].as_str() {
                        "1" => format!("{:.*}", precision, self.xi[(i, j)]),
                        name => format!("{:.*} {}", precision, self.xi[(i, j)], name),
                    })
                    .collect();
                let rhs = if terms.is_empty() { "0".into() } else { terms.join(" + ").replace("+ -", "- ") };
                format!("x{i}{lhs} = {rhs}")
            })
            .collect()
    }
}

/// `Ξ Θ(x)` per row.
pub fn sindy_predict(model: &SindyModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.state_dim() {
        return Err(invalid!("data have {} columns, model {}", x.ncols(), model.state_dim()));
    }
    Ok(model.library.transform(x)? * model.xi.transpose())
}

/// Integrate the identified continuous-time model with RK4 on the given
/// time grid; row `k` is the state at `t[k]`.
pub fn sindy_simulate(model: &SindyModel, x0: &[f64], t: &[f64]) -> Result<DMatrix<f64>> {
    if model.discrete_time {
        return Err(invalid!("simulation needs a continuous-time model"));
    }
    let d = model.state_dim();
    if x0.len() != d {
        return Err(invalid!("x0 has dimension {}, model {d}", x0.len()));
    }
    if t.is_empty() || t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid!("times must be non-empty and strictly increasing"));
    }
    let rhs = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let theta = DVector::from_vec(model.library.eval(x.as_slice())?);
        Ok(&model.xi * theta)
    };
    let mut out = DMatrix::zeros(t.len(), d);
    let mut x = DVector::from_column_slice(x0);
    out.row_mut(0).copy_from(&x.transpose());
    for k in 1..t.len() {
        let h = t[k] - t[k - 1];
        let k1 = rhs(&x)?;
        let k2 = rhs(&(&x + &k1 * (0.5 * h)))?;
        let k3 = rhs(&(&x + &k2 * (0.5 * h)))?;
        let k4 = rhs(&(&x + &k3 * h))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k, index: 0 });
        }
        out.row_mut(k).copy_from(&x.transpose());
    }
    Ok(out)
}

/// Coefficient of determination of predicted against given derivatives,
/// averaged over dimensions.
pub fn sindy_score(model: &SindyModel, x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Result<f64> {
    if x.shape() != dx.shape() {
        return Err(invalid!("data and derivatives differ in shape"));
    }
    let pred = sindy_predict(model, x)?;
    let mut total = 0.0;
    for j in 0..dx.ncols() {
        let col = dx.column(j);
        let mean = col.mean();
        let ss_tot: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        if !(ss_tot > 0.0) {
            return Err(Error::UndefinedScore(format!("derivative column {j} has zero variance")));
        }
        let ss_res: f64 = col.iter().zip(pred.column(j).iter()).map(|(a, b)| (a - b).powi(2)).sum();
        total += 1.0 - ss_res / ss_tot;
    }
    Ok(total / dx.ncols() as f64)
}
