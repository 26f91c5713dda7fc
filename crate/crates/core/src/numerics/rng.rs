//! Seeded randomness.
//!
//! Every stochastic step in the crate draws from [`RngState`], a ChaCha8
//! stream cipher generator (`rand_chacha`) keyed from a `u64` seed. ChaCha's
//! output is specified bit-for-bit, so a seed reproduces the same sequence
//! across builds and platforms. Gaussian draws use the ziggurat sampler from
//! `rand_distr`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid_arg, Result};

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent generator on a separate ChaCha stream of the same key.
    ///
    /// Forking does not advance `self`, so adding a consumer of a fork never
    /// shifts the draws seen by other consumers.
    pub fn fork(&self, stream: u64) -> RngState {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        RngState {
            seed: self.seed,
            inner,
        }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Shuffles a copy of `indices` and cuts it into batches of at most
    /// `batch_size` (the last batch may be short).
    pub fn minibatches(&mut self, indices: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
        let mut order = indices.to_vec();
        self.shuffle(&mut order);
        order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
    }
}

pub fn sample_standard_gaussian(rng: &mut RngState, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid_arg!("requested zero Gaussian draws"));
    }
    let mut out = vec![0.0; n];
    rng.fill_normal(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let mut rng = RngState::new(42);
        let x = sample_standard_gaussian(&mut rng, 100_000).unwrap();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn same_seed_same_draws() {
        let a = sample_standard_gaussian(&mut RngState::new(7), 64).unwrap();
        let b = sample_standard_gaussian(&mut RngState::new(7), 64).unwrap();
        assert_eq!(a, b);
        let c = sample_standard_gaussian(&mut RngState::new(8), 64).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_and_empty_draws() {
        let mut rng = RngState::new(1);
        let one = sample_standard_gaussian(&mut rng, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].is_finite());
        assert!(sample_standard_gaussian(&mut rng, 0).is_err());
    }

    #[test]
    fn forks_are_independent_of_parent_progress() {
        let mut a = RngState::new(3);
        let fa = a.fork(5).normal();
        a.normal();
        assert_eq!(a.fork(5).normal(), fa);
        assert_ne!(a.fork(6).normal(), fa);
    }

    #[test]
    fn minibatches_cover_every_index_once() {
        let mut rng = RngState::new(2);
        let idx: Vec<usize> = (0..10).collect();
        let batches = rng.minibatches(&idx, 4);
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, idx);
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = RngState::new(9);
        assert!((0..1000).all(|_| rng.below(7) < 7));
    }
}
