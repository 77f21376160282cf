//! Seedable Gaussian substreams and dyadically refinable Brownian paths.
//!
//! Every substream is keyed by `(master_seed, path_index, noise_index, level)`
//! and derived by hashing, so the draws a path sees never depend on how paths
//! are distributed over worker threads.
//!
//! Brownian increments live on a dyadic lattice (integer multiples of a power
//! of two chosen from the base step). Sums and differences of lattice values
//! are exact in `f64`, which is what makes refinement followed by pairwise
//! aggregation reproduce the coarse increments bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::params::GridSpec;

/// Lattice resolution below the base-level standard deviation, in bits.
const LATTICE_BITS: i32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub path_index: u64,
    pub noise_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream: StreamId,
}

impl SeedSpec {
    pub fn new(master_seed: u64, path_index: u64, noise_index: u32) -> Self {
        Self {
            master_seed,
            stream: StreamId {
                path_index,
                noise_index,
            },
        }
    }

    /// The same path with a different noise index.
    pub fn with_noise(self, noise_index: u32) -> Self {
        Self::new(self.master_seed, self.stream.path_index, noise_index)
    }

    /// Generator for the substream at refinement `level` (level 0 is the base stream).
    pub fn rng(&self, level: u32) -> ChaCha8Rng {
        let mut key = splitmix64(self.master_seed ^ 0x6a09_e667_f3bc_c908);
        key = splitmix64(key ^ self.stream.path_index);
        key = splitmix64(key ^ u64::from(self.stream.noise_index));
        key = splitmix64(key ^ u64::from(level));
        ChaCha8Rng::seed_from_u64(key)
    }

    pub fn gaussians(&self) -> GaussianStream {
        GaussianStream { rng: self.rng(0) }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Endless sequence of standard normal draws from one substream.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.next_gaussian();
        }
    }
}

impl Iterator for GaussianStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_gaussian())
    }
}

/// `count` i.i.d. N(0, 1) draws from the base substream of `seed`.
pub fn gaussian_stream(seed: &SeedSpec, count: usize) -> Vec<f64> {
    seed.gaussians().take(count).collect()
}

/// Power-of-two lattice spacing for increments of a grid with base step `delta`.
pub fn lattice_quantum(delta: f64) -> f64 {
    let exponent = delta.sqrt().log2().floor() as i32 - LATTICE_BITS;
    2f64.powi(exponent)
}

#[inline]
fn snap(x: f64, quantum: f64) -> f64 {
    let units = (x / quantum).round();
    debug_assert!(
        units.abs() < 2f64.powi(52),
        "increment outside the exact lattice range"
    );
    units * quantum
}

/// Brownian increments on `base_steps · 2^level` uniform steps, one array per noise.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    master_seed: u64,
    path_index: u64,
    level: u32,
    base_steps: usize,
    base_delta: f64,
    quantum: f64,
    increments: Vec<Vec<f64>>,
}

impl BrownianPath {
    /// Level-0 path on `grid` with `noises` independent components.
    ///
    /// Noise `j` draws from the base substream of `(master_seed, path_index, j)`,
    /// one Gaussian per step in step order.
    pub fn new(master_seed: u64, path_index: u64, noises: u32, grid: &GridSpec) -> Self {
        let base_delta = grid.delta();
        let quantum = lattice_quantum(base_delta);
        let scale = base_delta.sqrt();
        let increments = (0..noises)
            .map(|j| {
                let mut stream = SeedSpec::new(master_seed, path_index, j).gaussians();
                (0..grid.n_steps())
                    .map(|_| snap(scale * stream.next_gaussian(), quantum))
                    .collect()
            })
            .collect();
        Self {
            master_seed,
            path_index,
            level: 0,
            base_steps: grid.n_steps(),
            base_delta,
            quantum,
            increments,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn base_steps(&self) -> usize {
        self.base_steps
    }

    pub fn n_steps(&self) -> usize {
        self.base_steps << self.level
    }

    pub fn noises(&self) -> usize {
        self.increments.len()
    }

    /// Step size at the current level.
    pub fn delta(&self) -> f64 {
        self.base_delta / (1u64 << self.level) as f64
    }

    pub fn increments(&self, noise: usize) -> &[f64] {
        &self.increments[noise]
    }

    /// Halves every step by Brownian bridge sampling of the midpoints.
    ///
    /// For a coarse increment `w` over a step of length `h`, the first half is
    /// `w/2 + √h/2 · ξ` and the second half is `w` minus the first. The `ξ` for
    /// noise `j` come from substream `(master_seed, path_index, j)` at level
    /// `level + 1`, consumed in step order.
    pub fn refine(&self) -> Self {
        let next = self.level + 1;
        let half_sd = 0.5 * self.delta().sqrt();
        let increments = self
            .increments
            .iter()
            .enumerate()
            .map(|(j, coarse)| {
                let seed = SeedSpec::new(self.master_seed, self.path_index, j as u32);
                let mut rng = seed.rng(next);
                let mut fine = Vec::with_capacity(2 * coarse.len());
                for &w in coarse {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    let first = snap(0.5 * w + half_sd * xi, self.quantum);
                    fine.push(first);
                    fine.push(w - first);
                }
                fine
            })
            .collect();
        Self {
            level: next,
            increments,
            ..self.clone()
        }
    }

    /// Refines `levels` times.
    pub fn refined(&self, levels: u32) -> Self {
        let mut path = self.clone();
        for _ in 0..levels {
            path = path.refine();
        }
        path
    }

    /// Sums consecutive pairs (`fine[2i] + fine[2i + 1]`), giving the level below.
    pub fn aggregate(&self) -> Option<Self> {
        if self.level == 0 {
            return None;
        }
        let increments = self
            .increments
            .iter()
            .map(|fine| fine.chunks_exact(2).map(|p| p[0] + p[1]).collect())
            .collect();
        Some(Self {
            level: self.level - 1,
            increments,
            ..self.clone()
        })
    }

    /// Walks down to `level`, which must not exceed the current level.
    pub fn at_level(&self, level: u32) -> Option<Self> {
        if level > self.level {
            return None;
        }
        let mut path = self.clone();
        while path.level > level {
            path = path.aggregate()?;
        }
        Some(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(1.0, n).unwrap()
    }

    #[test]
    fn empty_stream() {
        assert!(gaussian_stream(&SeedSpec::new(7, 0, 0), 0).is_empty());
    }

    #[test]
    fn stream_is_deterministic() {
        let s = SeedSpec::new(7, 3, 1);
        assert_eq!(gaussian_stream(&s, 10), gaussian_stream(&s, 10));
        assert_ne!(
            gaussian_stream(&s, 10),
            gaussian_stream(&s.with_noise(0), 10)
        );
    }

    #[test]
    fn stream_moments() {
        let n = 1_000_000;
        let draws = gaussian_stream(&SeedSpec::new(11, 0, 0), n);
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn refine_then_aggregate_is_identity() {
        let base = BrownianPath::new(5, 2, 2, &grid(16));
        let fine = base.refine();
        assert_eq!(fine.n_steps(), 32);
        assert_eq!(fine.aggregate().unwrap(), base);
        let deep = base.refined(5);
        assert_eq!(deep.at_level(0).unwrap(), base);
        assert_eq!(deep.at_level(3).unwrap(), base.refined(3));
    }

    #[test]
    fn refine_is_deterministic() {
        let base = BrownianPath::new(5, 2, 1, &grid(8));
        assert_eq!(base.refine(), base.refine());
    }

    #[test]
    fn base_level_matches_gaussian_stream() {
        let g = GridSpec::new(0.5, 8).unwrap();
        let path = BrownianPath::new(9, 4, 1, &g);
        let z = gaussian_stream(&SeedSpec::new(9, 4, 0), 8);
        for (w, z) in path.increments(0).iter().zip(z) {
            assert!((w - g.delta().sqrt() * z).abs() <= lattice_quantum(g.delta()));
        }
    }

    #[test]
    fn refined_increment_variance() {
        // 1000 paths × 128 fine steps: ~1.3e5 level-1 increments.
        let g = GridSpec::new(1.0, 64).unwrap();
        let mut sum_sq = 0.0;
        let mut sum_4 = 0.0;
        let mut count = 0.0;
        for i in 0..1000 {
            let fine = BrownianPath::new(21, i, 1, &g).refine();
            for &w in fine.increments(0) {
                sum_sq += w * w;
                sum_4 += w.powi(4);
                count += 1.0;
            }
        }
        let var = sum_sq / count;
        let se = ((sum_4 / count - var * var) / count).sqrt();
        let expected = g.delta() / 2.0;
        assert!(
            (var - expected).abs() < 3.0 * se,
            "var {var} vs {expected} (se {se})"
        );
    }

    #[test]
    fn noises_are_uncorrelated() {
        let g = GridSpec::new(1.0, 1000).unwrap();
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        let mut n = 0.0;
        for i in 0..100 {
            let p = BrownianPath::new(3, i, 2, &g);
            for (x, y) in p.increments(0).iter().zip(p.increments(1)) {
                sxy += x * y;
                sxx += x * x;
                syy += y * y;
                n += 1.0;
            }
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() < 3.0 / f64::sqrt(n), "correlation {corr}");
    }
}
