//! Named, seeded random streams.
//!
//! Every random draw in the crate flows from a caller-supplied base seed
//! through [`stream`], keyed by a short tag naming the consumer and an index
//! (block number, trial number, run number). ChaCha8 keeps the streams
//! identical across platforms. Tags in use:
//!
//! - `"quadratic.q_factor"` (index = block): Gaussian matrix behind each Q_b
//! - `"softmax.features"`: feature matrix entries
//! - `"power_iteration.start"` (index = block or 0): start vectors
//! - `"delta_d.start"`: residual-operator start vector
//! - `"rho_h.pairs"`: sampled parameter pairs and probe directions
//! - `"minibatch.shuffle"`: epoch shuffles in stochastic runs
//! - `"noise.batches"` (index = draw): minibatch index draws
//! - `"extremality.rows"`: random row-stochastic matrices
//! - `"theta0.sphere"`: random initial points

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic ChaCha8 stream derived from (seed, tag, index).
pub fn stream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(seed ^ fnv1a(tag)) ^ index);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// `len` i.i.d. standard normal draws.
pub fn standard_normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// One row of a uniform-simplex (symmetric Dirichlet, alpha = 1) sample,
/// via normalized exponential spacings.
pub fn simplex_uniform_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    assert!(n >= 1);
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            // Uniform in (0, 1]; guard against ln(0).
            let u: f64 = 1.0 - rng.random::<f64>();
            -crate::numeric::ln(u)
        })
        .collect();
    let total: f64 = crate::numeric::pairwise_sum(&draws);
    draws.into_iter().map(|e| e / total).collect()
}

/// Fisher-Yates shuffle of `0..n`.
pub fn shuffled_indices(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// `k` distinct indices from `0..n`, returned sorted ascending.
///
/// Sorting pins the accumulation order of downstream subset reductions, so a
/// full-size sample reproduces full-batch results exactly.
pub fn sample_without_replacement(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n);
    let mut idx = shuffled_indices(rng, n);
    idx.truncate(k);
    idx.sort_unstable();
    idx
}
