//! Seeded random streams and binomial sampling.
//!
//! Every experiment owns a ChaCha8 stream seeded with `seed + index`, so a
//! study gives the same draws however its experiments are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Largest trial count sampled by CDF inversion; above it, trials are summed.
pub const INVERSION_MAX_TRIALS: u64 = 64;

/// Stream for experiment `index` of a study seeded with `seed`.
pub fn experiment_stream(seed: u64, index: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index))
}

/// One draw from Binomial(n, p). `p` is clamped to [0, 1].
pub fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    let p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
    if p == 0.0 || n == 0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    if n <= INVERSION_MAX_TRIALS {
        if p > 0.5 {
            return n - binomial_inversion(rng, n, 1.0 - p);
        }
        return binomial_inversion(rng, n, p);
    }
    (0..n).filter(|_| rng.gen::<f64>() < p).count() as u64
}

fn binomial_inversion<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    let u: f64 = rng.gen();
    let ratio = p / (1.0 - p);
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut cdf = pmf;
    let mut k = 0;
    while u >= cdf && k < n {
        pmf *= ratio * (n - k) as f64 / (k + 1) as f64;
        k += 1;
        cdf += pmf;
    }
    k
}
