//! Seed derivation and Bernoulli sampling helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn stream(seed: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, index))
}

/// Calls `hit(i)` for each `i < n` selected independently with probability `p`.
///
/// Uses geometric gaps, so the cost is proportional to the number of hits.
pub fn for_each_bernoulli<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R, mut hit: impl FnMut(u64)) {
    if n == 0 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        (0..n).for_each(hit);
        return;
    }
    let ln_q = (-p).ln_1p();
    let mut i = 0u64;
    loop {
        let u = 1.0 - rng.gen::<f64>();
        let gap = (u.ln() / ln_q).floor();
        if gap >= (n - i) as f64 {
            return;
        }
        i += gap as u64;
        hit(i);
        i += 1;
        if i >= n {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_rate() {
        let mut rng = stream(1, 0);
        let n = 1_000_000u64;
        let p = 0.01;
        let mut count = 0u64;
        let mut last = None;
        for_each_bernoulli(n, p, &mut rng, |i| {
            assert!(i < n);
            assert!(last.map_or(true, |l| i > l));
            last = Some(i);
            count += 1;
        });
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((count as f64 - n as f64 * p).abs() < 4.0 * sd, "count {count}");
    }

    #[test]
    fn bernoulli_edges() {
        let mut rng = stream(2, 0);
        let mut c = 0;
        for_each_bernoulli(100, 0.0, &mut rng, |_| c += 1);
        assert_eq!(c, 0);
        for_each_bernoulli(100, 1.0, &mut rng, |_| c += 1);
        assert_eq!(c, 100);
    }

    #[test]
    fn streams_differ() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }
}
