//! Keyed random streams.
//!
//! Every stream is a ChaCha8 keystream whose 256-bit key is a SplitMix64
//! digest of `(seed, labels...)`. Work is labelled by what it computes
//! (step index, block index, replica, ...), never by the worker thread
//! that happens to run it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Stream = ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic, platform-independent stream for `(seed, labels)`.
pub fn derive_stream(seed: u64, labels: &[u64]) -> Stream {
    let mut state = seed ^ 0x6A09_E667_F3BC_C908;
    let mut acc = splitmix64(&mut state);
    for (i, &l) in labels.iter().enumerate() {
        state ^= l.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(i as u64 + 1);
        acc ^= splitmix64(&mut state);
    }
    state ^= (labels.len() as u64).rotate_left(17) ^ acc;
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform on the open interval (0, 1).
#[inline]
pub fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 53 random bits shifted off zero
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform index in `0..n` (Lemire's multiply-shift; bias below 2^-32 for n < 2^32).
#[inline]
pub fn index<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_key_same_stream() {
        let mut a = derive_stream(42, &[3, 7]);
        let mut b = derive_stream(42, &[3, 7]);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn label_order_and_length_matter() {
        let x = derive_stream(1, &[1, 2]).next_u64();
        assert_ne!(x, derive_stream(1, &[2, 1]).next_u64());
        assert_ne!(x, derive_stream(1, &[1, 2, 0]).next_u64());
        assert_ne!(x, derive_stream(2, &[1, 2]).next_u64());
    }

    #[test]
    fn adjacent_labels_uncorrelated() {
        let n = 1_000_000;
        let mut a = derive_stream(9, &[0, 5]);
        let mut b = derive_stream(9, &[0, 6]);
        let mut sxy = 0.0;
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for _ in 0..n {
            let x = std_normal(&mut a);
            let y = std_normal(&mut b);
            sxy += x * y;
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx * sy / nf / nf;
        let corr = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        assert!(corr.abs() < 5.0 / nf.sqrt(), "corr {corr}");
    }

    #[test]
    fn normals_have_unit_variance() {
        let n = 1_000_000;
        let mut r = derive_stream(11, &[]);
        let xs: Vec<f64> = (0..n).map(|_| std_normal(&mut r)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
        let se_m = (1.0 / n as f64).sqrt();
        let se_v = (2.0 / n as f64).sqrt();
        assert!(m.abs() < 5.0 * se_m);
        assert!((v - 1.0).abs() < 5.0 * se_v);
    }

    #[test]
    fn open_interval_and_index_range() {
        let mut r = derive_stream(0, &[1]);
        for _ in 0..10_000 {
            let u = open01(&mut r);
            assert!(u > 0.0 && u < 1.0);
            assert!(index(&mut r, 17) < 17);
        }
    }
}
