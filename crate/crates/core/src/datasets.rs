//! Synthetic systems: Euler–Maruyama SDE integration, the 2D double well,
//! a 1D four-well potential, the Bickley jet, the sqrt-transformed two-state
//! HMM and the Rössler attractor.

use crate::error::{invalid, Error, Result};
use crate::markov::sample_chain;
use crate::prelude::*;
use core::f64::consts::PI;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_matrix::matrix"))]
    pub frames: DMatrix<f64>,
    /// Time between consecutive frames.
    pub dt_effective: f64,
    pub seed: u64,
}

/// `dx = F(t, x) dt + σ dW`, integrated with step `h` and emitting every
/// `n_substeps`-th state.
#[derive(Clone)]
pub struct SdeSystem<F> {
    pub dimension: usize,
    /// Writes `F(t, x)` into the output slice.
    pub drift: F,
    pub diffusion: DMatrix<f64>,
    pub step: f64,
    pub n_substeps: usize,
}

impl<F: Fn(f64, &[f64], &mut [f64])> SdeSystem<F> {
    pub fn new(dimension: usize, drift: F, diffusion: DMatrix<f64>, step: f64, n_substeps: usize) -> Result<Self> {
        if diffusion.nrows() != dimension || diffusion.ncols() != dimension {
            return Err(invalid!("diffusion must be {dimension}×{dimension}"));
        }
        if !(step > 0.0) || n_substeps == 0 {
            return Err(invalid!("step must be positive and n_substeps at least 1"));
        }
        Ok(Self { dimension, drift, diffusion, step, n_substeps })
    }
}

/// `x_{k+1} = x_k + F(t_k, x_k) h + σ √h ξ_k`; the first frame is `x0`.
pub fn euler_maruyama<F: Fn(f64, &[f64], &mut [f64])>(system: &SdeSystem<F>, x0: &[f64], n_frames: usize, seed: u64) -> Result<Trajectory> {
    let d = system.dimension;
    if x0.len() != d {
        return Err(invalid!("x0 has dimension {}, system {d}", x0.len()));
    }
    let h = system.step;
    let noise = &system.diffusion * h.sqrt();
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || noise[(i, j)] == 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0.to_vec();
    let mut f = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut data = Vec::with_capacity(n_frames * d);
    let mut t = 0.0;
    let mut step = 0;
    for frame in 0..n_frames {
        if frame > 0 {
            for _ in 0..system.n_substeps {
                (system.drift)(t, &x, &mut f);
                for v in xi.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                for i in 0..d {
                    let kick = if diagonal { noise[(i, i)] * xi[i] } else { (0..d).map(|j| noise[(i, j)] * xi[j]).sum() };
                    x[i] += f[i] * h + kick;
                }
                step += 1;
                t += h;
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { step, index: 0 });
                }
            }
        }
        data.extend_from_slice(&x);
    }
    Ok(Trajectory { frames: DMatrix::from_row_slice(n_frames, d, &data), dt_effective: h * system.n_substeps as f64, seed })
}

/// Drift `−∇V` of `V(x) = (x₁² − 1)² + x₂²`.
pub fn double_well_drift(_t: f64, x: &[f64], out: &mut [f64]) {
    out[0] = -4.0 * x[0] * (x[0] * x[0] - 1.0);
    out[1] = -2.0 * x[1];
}

pub fn double_well_system(h: f64, n_substeps: usize) -> Result<SdeSystem<fn(f64, &[f64], &mut [f64])>> {
    SdeSystem::new(2, double_well_drift as fn(f64, &[f64], &mut [f64]), DMatrix::from_diagonal_element(2, 2, 0.7), h, n_substeps)
}

/// Double well with `σ = diag(0.7, 0.7)`, started at the saddle.
/// Defaults used elsewhere: `h = 1e-3`, `n_substeps = 100`.
pub fn double_well_2d(seed: u64, n_frames: usize, h: f64, n_substeps: usize) -> Result<Trajectory> {
    euler_maruyama(&double_well_system(h, n_substeps)?, &[0.0, 0.0], n_frames, seed)
}

/// One-dimensional potential whose derivative is `scale · Π (x − rᵢ)`.
/// With seven increasing roots, the odd-indexed ones (0, 2, 4, 6) are the
/// minima and the rest the barriers.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FourWellPotential {
    pub roots: [f64; 7],
    pub scale: f64,
    /// Noise amplitude of `dx = −V'(x) dt + σ dW`.
    pub sigma: f64,
}

impl Default for FourWellPotential {
    /// Slightly asymmetric wells at −3, −1, 1, 3 with barriers at −2.25,
    /// 0.1 and 2.2. At `σ = 1` the three slow relaxation times are about
    /// 25, 14 and 2.9 time units, the fourth about 0.35.
    fn default() -> Self {
        Self { roots: [-3.0, -2.25, -1.0, 0.1, 1.0, 2.2, 3.0], scale: 0.06, sigma: 1.0 }
    }
}

impl FourWellPotential {
    pub fn minima(&self) -> [f64; 4] {
        [self.roots[0], self.roots[2], self.roots[4], self.roots[6]]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.scale * self.roots.iter().map(|r| x - r).product::<f64>()
    }

    /// Coefficients (ascending powers) of `V`, normalized to `V(0) = 0`.
    fn coefficients(&self) -> [f64; 9] {
        let mut dp = [0.0; 8];
        dp[0] = self.scale;
        for (deg, r) in self.roots.iter().enumerate() {
            for k in (1..=deg + 1).rev() {
                dp[k] = dp[k - 1] - r * dp[k];
            }
            dp[0] *= -r;
        }
        let mut p = [0.0; 9];
        for k in 0..8 {
            p[k + 1] = dp[k] / (k + 1) as f64;
        }
        p
    }

    pub fn potential(&self, x: f64) -> f64 {
        self.coefficients().iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Four-well random walk started in the well at `x = 1`. Typical
/// parameters: `h = 1e-3`, `n_substeps = 10`.
pub fn quadwell_1d(potential: &FourWellPotential, seed: u64, n_frames: usize, h: f64, n_substeps: usize) -> Result<Trajectory> {
    let p = potential.clone();
    let system = SdeSystem::new(1, move |_t: f64, x: &[f64], out: &mut [f64]| out[0] = -p.derivative(x[0]), DMatrix::from_element(1, 1, potential.sigma), h, n_substeps)?;
    euler_maruyama(&system, &[potential.roots[4]], n_frames, seed)
}

/// Parameters of the Bickley jet stream function
/// `Ψ = c₃y − U₀L tanh(y/L) + U₀L sech²(y/L) [A₃cos(k₃x) + A₂cos(k₂x − σ₂t) + A₁cos(k₁x − σ₁t)]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BickleyConfig {
    pub u0: f64,
    pub l: f64,
    pub c2: f64,
    pub c3: f64,
    /// `(A₁, A₂, A₃)`.
    pub amplitudes: [f64; 3],
    /// `(k₁, k₂, k₃)`; integer multiples of `2π/period` keep `Ψ` periodic.
    pub wavenumbers: [f64; 3],
    pub sigma1: f64,
    pub sigma2: f64,
    pub period: f64,
    pub y_range: (f64, f64),
}

impl Default for BickleyConfig {
    /// Standard values (U₀ = 5.4138, L = 1.77, c₂ = 0.205U₀, c₃ = 0.461U₀,
    /// A = (0.0075, 0.15, 0.3), kₙ = 2n/r₀) with `r₀ = 20/π` so that the
    /// channel is exactly 20 long.
    fn default() -> Self {
        let u0 = 5.4138;
        let r0 = 20.0 / PI;
        let k = [2.0 / r0, 4.0 / r0, 6.0 / r0];
        let (c2, c3) = (0.205 * u0, 0.461 * u0);
        let sigma1 = 0.5 * k[1] * (c2 - c3);
        Self { u0, l: 1.77, c2, c3, amplitudes: [0.0075, 0.15, 0.3], wavenumbers: k, sigma1, sigma2: 2.0 * sigma1, period: 20.0, y_range: (-4.0, 4.0) }
    }
}

impl BickleyConfig {
    fn phases(&self, x: f64, t: f64) -> [f64; 3] {
        let k = self.wavenumbers;
        [k[0] * x - self.sigma1 * t, k[1] * x - self.sigma2 * t, k[2] * x]
    }

    pub fn stream_function(&self, x: f64, y: f64, t: f64) -> f64 {
        let s = 1.0 / (y / self.l).cosh().powi(2);
        let modulation: f64 = self.phases(x, t).iter().zip(self.amplitudes).map(|(p, a)| a * p.cos()).sum();
        self.c3 * y - self.u0 * self.l * (y / self.l).tanh() + self.u0 * self.l * s * modulation
    }

    /// `(−∂Ψ/∂y, ∂Ψ/∂x)`.
    pub fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let th = (y / self.l).tanh();
        let s = 1.0 - th * th;
        let ph = self.phases(x, t);
        let mut m = 0.0;
        let mut mx = 0.0;
        for i in 0..3 {
            let (sin, cos) = ph[i].sin_cos();
            m += self.amplitudes[i] * cos;
            mx -= self.amplitudes[i] * self.wavenumbers[i] * sin;
        }
        let dpsi_dy = self.c3 - self.u0 * s - 2.0 * self.u0 * s * th * m;
        [-dpsi_dy, self.u0 * self.l * s * mx]
    }

    pub fn wrap(&self, x: f64) -> f64 {
        let w = num_traits::Euclid::rem_euclid(&x, &self.period);
        if w >= self.period {
            0.0
        } else {
            w
        }
    }

    /// `n` positions drawn uniformly from the channel.
    pub fn uniform_particles<R: Rng>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let (lo, hi) = self.y_range;
        let mut out = DMatrix::zeros(n, 2);
        for i in 0..n {
            out[(i, 0)] = rng.random::<f64>() * self.period;
            out[(i, 1)] = lo + rng.random::<f64>() * (hi - lo);
        }
        out
    }

    fn integrate_particle(&self, mut p: [f64; 2], t0: f64, h: f64, n_steps: usize) -> Option<[f64; 2]> {
        let mut t = t0;
        for _ in 0..n_steps {
            let f = |q: [f64; 2], t: f64| self.velocity(q[0], q[1], t);
            let k1 = f(p, t);
            let k2 = f([p[0] + 0.5 * h * k1[0], p[1] + 0.5 * h * k1[1]], t + 0.5 * h);
            let k3 = f([p[0] + 0.5 * h * k2[0], p[1] + 0.5 * h * k2[1]], t + 0.5 * h);
            let k4 = f([p[0] + h * k3[0], p[1] + h * k3[1]], t + h);
            p[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            p[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            p[0] = self.wrap(p[0]);
            t += h;
            if !p[0].is_finite() || !p[1].is_finite() {
                return None;
            }
        }
        Some(p)
    }
}

/// Flow map from `t0` to `t1` (either direction) by fixed-step RK4 with
/// step magnitude at most `dt`; `x` is wrapped into `[0, period)` after
/// every step.
pub fn bickley_flow(config: &BickleyConfig, x0: &DMatrix<f64>, t0: f64, t1: f64, dt: f64) -> Result<DMatrix<f64>> {
    if !(dt > 0.0) {
        return Err(invalid!("dt must be positive"));
    }
    if x0.ncols() != 2 {
        return Err(invalid!("particles must have 2 columns"));
    }
    let n_steps = ((t1 - t0).abs() / dt).ceil() as usize;
    let h = if n_steps == 0 { 0.0 } else { (t1 - t0) / n_steps as f64 };
    let run = |i: usize| config.integrate_particle([x0[(i, 0)], x0[(i, 1)]], t0, h, n_steps).ok_or(Error::Divergence { step: n_steps, index: i });
    #[cfg(feature = "parallel")]
    let rows: Vec<Result<[f64; 2]>> = {
        use rayon::prelude::*;
        (0..x0.nrows()).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Result<[f64; 2]>> = (0..x0.nrows()).map(run).collect();
    let mut out = DMatrix::zeros(x0.nrows(), 2);
    for (i, r) in rows.into_iter().enumerate() {
        let p = r?;
        out[(i, 0)] = p[0];
        out[(i, 1)] = p[1];
    }
    Ok(out)
}

/// Parameters of the sqrt-transformed two-state model.
///
/// The default emissions are two thin horizontal bands at `y = 0` and
/// `y = 1`, wide along `x`; the transform bends them into nested wedges that
/// no straight line separates.
#[derive(Debug, Clone, PartialEq)]
pub struct SqrtModel {
    pub transition_matrix: DMatrix<f64>,
    pub means: [[f64; 2]; 2],
    /// Variances along the principal axes before rotation.
    pub axis_variances: [f64; 2],
    /// Rotation angle per hidden state (radians).
    pub angles: [f64; 2],
}

impl Default for SqrtModel {
    fn default() -> Self {
        Self {
            transition_matrix: DMatrix::from_row_slice(2, 2, &[0.95, 0.05, 0.05, 0.95]),
            means: [[0.0, 0.0], [0.0, 1.0]],
            axis_variances: [30.0, 0.015],
            angles: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqrtSample {
    /// Observed frames `(x, y + √|x|)`.
    pub observations: DMatrix<f64>,
    /// Emissions before the transform.
    pub latent: DMatrix<f64>,
    pub hidden: Vec<usize>,
}

/// `(x, y) ↦ (x, y + √|x|)`.
pub fn sqrt_transform(p: [f64; 2]) -> [f64; 2] {
    [p[0], p[1] + p[0].abs().sqrt()]
}

impl SqrtModel {
    pub fn sample(&self, n_frames: usize, seed: u64) -> Result<SqrtSample> {
        if n_frames == 0 {
            return Err(invalid!("n_frames must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = rng.random_range(0..2);
        let hidden = sample_chain(&self.transition_matrix, n_frames, start, &mut rng);
        let mut latent = DMatrix::zeros(n_frames, 2);
        let mut observations = DMatrix::zeros(n_frames, 2);
        for (i, &s) in hidden.iter().enumerate() {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let (u, v) = (a * self.axis_variances[0].sqrt(), b * self.axis_variances[1].sqrt());
            let (sin, cos) = self.angles[s].sin_cos();
            let p = [self.means[s][0] + cos * u - sin * v, self.means[s][1] + sin * u + cos * v];
            let q = sqrt_transform(p);
            latent[(i, 0)] = p[0];
            latent[(i, 1)] = p[1];
            observations[(i, 0)] = q[0];
            observations[(i, 1)] = q[1];
        }
        Ok(SqrtSample { observations, latent, hidden })
    }
}

/// Sample the default sqrt model.
pub fn sample_sqrt_model(n_frames: usize, seed: u64) -> Result<SqrtSample> {
    SqrtModel::default().sample(n_frames, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RosslerParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for RosslerParams {
    fn default() -> Self {
        Self { a: 0.1, b: 0.1, c: 14.0 }
    }
}

impl RosslerParams {
    pub fn rhs(&self, x: &[f64; 3]) -> [f64; 3] {
        [-x[1] - x[2], x[0] + self.a * x[1], self.b + x[2] * (x[0] - self.c)]
    }
}

/// Classical RK4 step of an autonomous system.
pub fn rk4_step<const D: usize>(f: impl Fn(&[f64; D]) -> [f64; D], x: &[f64; D], h: f64) -> [f64; D] {
    let add = |a: &[f64; D], b: &[f64; D], s: f64| core::array::from_fn::<f64, D, _>(|i| a[i] + s * b[i]);
    let k1 = f(x);
    let k2 = f(&add(x, &k1, 0.5 * h));
    let k3 = f(&add(x, &k2, 0.5 * h));
    let k4 = f(&add(x, &k3, h));
    core::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Rössler trajectory on `t = 0, dt, …, t1` (the last step is shortened
/// to land on `t1` exactly).
pub fn rossler(params: &RosslerParams, x0: [f64; 3], t1: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t1 >= 0.0) {
        return Err(invalid!("need dt > 0 and t1 ≥ 0"));
    }
    let full = (t1 / dt + 1e-9).floor() as usize;
    let rest = t1 - full as f64 * dt;
    let n_steps = if rest > 1e-12 * dt.max(1.0) { full + 1 } else { full };
    let mut data = Vec::with_capacity(3 * (n_steps + 1));
    let mut x = x0;
    data.extend_from_slice(&x);
    for step in 0..n_steps {
        let h = if step == full { rest } else { dt };
        x = rk4_step(|v| params.rhs(v), &x, h);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: step + 1, index: 0 });
        }
        data.extend_from_slice(&x);
    }
    Ok(Trajectory { frames: DMatrix::from_row_slice(n_steps + 1, 3, &data), dt_effective: dt, seed: 0 })
}

/// Analytic right-hand side evaluated on every frame.
pub fn rossler_derivatives(params: &RosslerParams, frames: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(frames.nrows(), 3);
    for i in 0..frames.nrows() {
        let d = params.rhs(&[frames[(i, 0)], frames[(i, 1)], frames[(i, 2)]]);
        for j in 0..3 {
            out[(i, j)] = d[j];
        }
    }
    out
}

/// Uniform-width bin index of every value in `[lo, hi]`; values outside
/// are clamped to the edge bins.
pub fn discretize_uniform(values: &DVector<f64>, lo: f64, hi: f64, n_bins: usize) -> Vec<usize> {
    let w = (hi - lo) / n_bins as f64;
    values.iter().map(|&v| (((v - lo) / w).floor().max(0.0) as usize).min(n_bins - 1)).collect()
}
