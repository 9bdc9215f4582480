//! Kernel functions and blockwise Gram-matrix assembly.

use crate::error::{invalid, Result};
use crate::prelude::*;
use nalgebra::DMatrix;

/// Default number of rows per assembly block.
pub const DEFAULT_BLOCK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Kernel {
    /// `exp(−½‖x−y‖²/σ²)`
    Gaussian { sigma: f64 },
    /// `(c + xᵀy)^p`
    Polynomial { c: f64, p: u32 },
}

impl Kernel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let k = Kernel::Gaussian { sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn polynomial(c: f64, p: u32) -> Result<Self> {
        let k = Kernel::Polynomial { c, p };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(invalid!("gaussian bandwidth must be positive, got {sigma}"))
            }
            Kernel::Polynomial { p: 0, .. } => Err(invalid!("polynomial degree must be at least 1")),
            _ => Ok(()),
        }
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Gaussian { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-0.5 * d2 / (sigma * sigma)).exp()
            }
            Kernel::Polynomial { c, p } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (c + dot).powi(p as i32)
            }
        }
    }
}

pub fn kernel_eval(k: &Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid!("kernel arguments differ in dimension: {} vs {}", x.len(), y.len()));
    }
    Ok(k.eval_unchecked(x, y))
}

fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    a.transpose().as_slice().to_vec()
}

/// `G[i][j] = κ(a_i, b_j)` over the rows of `a` and `b`.
pub fn gram_matrix(k: &Kernel, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    gram_matrix_blocked(k, a, b, DEFAULT_BLOCK_ROWS)
}

/// Gram matrix assembled in blocks of `block_rows` rows of `a`. Each entry
/// is computed independently, so the result does not depend on blocking or
/// on whether blocks run in parallel.
pub fn gram_matrix_blocked(k: &Kernel, a: &DMatrix<f64>, b: &DMatrix<f64>, block_rows: usize) -> Result<DMatrix<f64>> {
    k.validate()?;
    if a.ncols() != b.ncols() {
        return Err(invalid!("point sets differ in dimension: {} vs {}", a.ncols(), b.ncols()));
    }
    let (n, m, d) = (a.nrows(), b.nrows(), a.ncols());
    let ar = row_major(a);
    let br = row_major(b);
    // Filled row-major, i.e. as the transpose in nalgebra's column-major storage.
    let mut out = vec![0.0; n * m];
    let block = block_rows.max(1) * m;
    let fill = |(bi, chunk): (usize, &mut [f64])| {
        let row0 = bi * block_rows.max(1);
        for (r, row) in chunk.chunks_mut(m).enumerate() {
            let x = &ar[(row0 + r) * d..(row0 + r + 1) * d];
            for (j, v) in row.iter_mut().enumerate() {
                *v = k.eval_unchecked(x, &br[j * d..(j + 1) * d]);
            }
        }
    };
    if m > 0 {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            out.par_chunks_mut(block).enumerate().for_each(fill);
        }
        #[cfg(not(feature = "parallel"))]
        out.chunks_mut(block).enumerate().for_each(fill);
    }
    Ok(DMatrix::from_row_slice(n, m, &out))
}

/// Gram matrix of a point set with itself, filled symmetrically so that the
/// result equals its transpose exactly.
pub fn gram_symmetric(k: &Kernel, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut g = gram_matrix(k, a, a)?;
    let n = g.nrows();
    for i in 0..n {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    Ok(g)
}
