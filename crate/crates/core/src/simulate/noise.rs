//! Counter-based Gaussian noise.
//!
//! Every path owns an independent ChaCha8 stream keyed by
//! `(seed, domain, counter)` with the path index as stream id, so a batch
//! is reproducible and independent of how paths are split across workers.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{SimError, TimeGrid};
use crate::autodiff::Matrix;
use crate::math;

/// Disjoint randomness domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Train = 1,
    Verify = 2,
    Neighborhood = 3,
    Dump = 4,
    Scratch = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub seed: u64,
    pub domain: Domain,
    /// Training step or any other per-batch counter.
    pub counter: u64,
}

impl NoiseKey {
    pub fn new(seed: u64, domain: Domain, counter: u64) -> Self {
        Self {
            seed,
            domain,
            counter,
        }
    }

    /// Generator for one path.
    pub fn path_rng(&self, path: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(self.domain as u64).to_le_bytes());
        key[16..24].copy_from_slice(&self.counter.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(path);
        rng
    }
}

/// Uniform on `[0, 1)` with 53 random bits.
pub fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normals by the Box–Muller transform, consumed in pairs.
#[derive(Debug, Clone)]
pub struct Gaussian<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> Gaussian<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the logarithm finite
        let u1 = 1.0 - uniform01(&mut self.rng);
        let u2 = uniform01(&mut self.rng);
        let radius = math::sqrt(-2.0 * math::ln(u1));
        let angle = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(radius * math::sin(angle));
        radius * math::cos(angle)
    }
}

/// Splits `n_steps` into `odd · 2^levels`.
fn dyadic_split(n_steps: usize) -> (usize, u32) {
    let levels = n_steps.trailing_zeros();
    (n_steps >> levels, levels)
}

/// Increments of one path, `n_steps x d` row-major, built by Brownian-bridge
/// refinement of a base grid with the odd part of `n_steps`.
///
/// Grids whose step counts share an odd part draw a common prefix of the
/// stream, so the coarse increments equal sums of the fine ones.
pub fn bridge_path(rng: impl RngCore, grid: &TimeGrid, d: usize) -> Vec<f64> {
    let mut gauss = Gaussian::new(rng);
    let (base, levels) = dyadic_split(grid.n_steps);
    let mut h = grid.horizon / base as f64;
    let mut cur: Vec<f64> = (0..base * d).map(|_| math::sqrt(h) * gauss.sample()).collect();
    for _ in 0..levels {
        let half_sd = 0.5 * math::sqrt(h);
        let mut next = Vec::with_capacity(cur.len() * 2);
        for interval in cur.chunks_exact(d) {
            let first: Vec<f64> = interval
                .iter()
                .map(|&w| 0.5 * w + half_sd * gauss.sample())
                .collect();
            next.extend_from_slice(&first);
            next.extend(interval.iter().zip(&first).map(|(&w, &a)| w - a));
        }
        cur = next;
        h *= 0.5;
    }
    cur
}

/// `m` paths of increments for `grid`, returned per station as `m x d`.
pub fn sample_increments(key: NoiseKey, m: usize, grid: &TimeGrid, d: usize) -> Vec<Matrix> {
    sample_increments_range(key, 0..m, grid, d)
}

/// Increments for the paths in `paths` only; rows are in range order.
pub fn sample_increments_range(
    key: NoiseKey,
    paths: core::ops::Range<usize>,
    grid: &TimeGrid,
    d: usize,
) -> Vec<Matrix> {
    let m = paths.len();
    let mut out: Vec<Matrix> = (0..grid.n_steps).map(|_| Matrix::zeros(m, d)).collect();
    for (row, p) in paths.enumerate() {
        let path = bridge_path(key.path_rng(p as u64), grid, d);
        for (n, step) in path.chunks_exact(d).enumerate() {
            out[n].row_mut(row).copy_from_slice(step);
        }
    }
    out
}

/// Sums consecutive groups of `factor` increments.
pub fn coarsen(dw: &[Matrix], factor: usize) -> Result<Vec<Matrix>, SimError> {
    if factor == 0 || !dw.len().is_multiple_of(factor) {
        return Err(SimError::Coarsen {
            steps: dw.len(),
            factor,
        });
    }
    Ok(dw
        .chunks_exact(factor)
        .map(|group| {
            let mut acc = group[0].clone();
            for g in &group[1..] {
                acc.add_assign(g);
            }
            acc
        })
        .collect())
}
