//! Deterministic random substreams and order-preserving parallel sampling.
//!
//! Sample `i` always draws from stream `i` of a ChaCha8 generator keyed by
//! the run seed, and results are collected in index order, so estimates do
//! not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::Result;
use crate::scalar::Real;

/// Key offset for auxiliary draws (initial vectors) so they never perturb
/// the letter/torus stream of the same sample.
const AUX_KEY: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn aux_substream(seed: u64, index: u64) -> ChaCha8Rng {
    substream(seed ^ AUX_KEY, index)
}

/// Independent run seed derived from `seed` and a small tag (splitmix64).
pub fn tagged_seed(seed: u64, tag: u64) -> u64 {
    let mut x = seed ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03);
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Runs `f(i, rng_i)` for `i in 0..samples` in parallel, results in index order.
pub fn par_samples<R, F>(samples: usize, seed: u64, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<R> + Sync + Send,
{
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

/// Uniform point of `[0,1)^m`.
pub fn uniform_torus<T: Real, R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<T> {
    (0..m).map(|_| T::lit(rng.random::<f64>())).collect()
}

/// Uniformly distributed unit vector in `R^d`.
pub fn random_unit<T: Real, R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.iter().map(|&x| T::lit(x / n)).collect();
        }
    }
}
