use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

/// Generator for replication `rep` at sample size `n`.
///
/// The key is a hash of `(seed, n)`; the replication selects the ChaCha
/// stream, so replications never share output and can run in any order.
pub fn replication_rng(seed: u64, n: usize, rep: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((n as u64).to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(rep as u64);
    rng
}

/// Separate stream for random designs, disjoint from every replication stream.
pub fn design_rng(seed: u64, n: usize) -> ChaCha8Rng {
    let mut rng = replication_rng(seed, n, 0);
    rng.set_stream(u64::MAX);
    rng
}

/// `len` i.i.d. `N(0, sigma^2)` draws.
pub fn gaussian_noise<R: Rng>(rng: &mut R, len: usize, sigma: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sigma * z
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = gaussian_noise(&mut replication_rng(1, 64, 3), 8, 1.0);
        let b = gaussian_noise(&mut replication_rng(1, 64, 3), 8, 1.0);
        let c = gaussian_noise(&mut replication_rng(1, 64, 4), 8, 1.0);
        let d = gaussian_noise(&mut replication_rng(1, 128, 3), 8, 1.0);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn noise_moments() {
        let sigma = 0.7;
        let n = 100_000;
        let draws = gaussian_noise(&mut replication_rng(99, 1, 0), n, sigma);
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let s2 = sigma * sigma;
        assert!(mean.abs() <= 4.0 * (s2 / n as f64).sqrt(), "{mean}");
        // Var of the sample variance is 2 sigma^4 / (n - 1) for Gaussian data.
        assert!((var - s2).abs() <= 4.0 * (2.0 * s2 * s2 / (n - 1) as f64).sqrt(), "{var}");
    }
}
