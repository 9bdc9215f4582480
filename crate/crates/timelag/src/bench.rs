//! Throughput of the double-well Euler–Maruyama generator.

use std::time::Instant;
use timelag_core::datasets::{euler_maruyama, double_well_system};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchResult {
    pub steps: usize,
    pub seconds: f64,
    pub steps_per_second: f64,
}

/// Integrate `n_steps` single-threaded steps (one frame per 1000 steps)
/// and report the best of `repeats` runs.
pub fn double_well_throughput(n_steps: usize, repeats: usize) -> timelag_core::Result<BenchResult> {
    let substeps = 1000;
    let n_frames = n_steps / substeps + 1;
    let system = double_well_system(1e-3, substeps)?;
    let mut best = f64::INFINITY;
    for r in 0..repeats.max(1) {
        let start = Instant::now();
        let t = euler_maruyama(&system, &[0.0, 0.0], n_frames, r as u64)?;
        best = best.min(start.elapsed().as_secs_f64());
        std::hint::black_box(t);
    }
    let steps = (n_frames - 1) * substeps;
    Ok(BenchResult { steps, seconds: best, steps_per_second: steps as f64 / best })
}
