//! Reproducible random streams.
//!
//! A [`Rng`] is identified by a `(master_seed, stream_id)` pair. The master
//! seed keys a ChaCha8 generator and the stream id selects one of its 2^64
//! independent keystreams, so two streams with different ids never overlap.
//! Child streams are derived by hashing the parent stream id together with a
//! label (SHA-256, truncated to 64 bits).

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct Rng {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            inner,
        }
    }

    /// Stream 0 of `master_seed`.
    pub fn from_seed(master_seed: u64) -> Self {
        Self::new(master_seed, 0)
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream derived from this one's identity (not its position).
    pub fn derive(&self, label: u64) -> Self {
        Self::new(self.master_seed, mix_stream(self.stream_id, label))
    }

    /// Same identity, rewound to the start of the stream.
    pub fn reset(&self) -> Self {
        Self::new(self.master_seed, self.stream_id)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn mix_stream(parent: u64, label: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"eigenscape-stream");
    hasher.update(parent.to_le_bytes());
    hasher.update(label.to_le_bytes());
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

/// `rows × cols` matrix of i.i.d. N(0, std²) entries, filled column-major.
pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    assert!(std > 0.0, "standard deviation must be positive");
    DMatrix::from_fn(rows, cols, |_, _| std * rng.normal())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism_from_reset() {
        let rng = Rng::new(7, 3);
        let a = gaussian_matrix(&mut rng.reset(), 2, 2, 1.0);
        let b = gaussian_matrix(&mut rng.reset(), 2, 2, 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn std_scaling_is_exact() {
        let rng = Rng::new(11, 0);
        let a = gaussian_matrix(&mut rng.reset(), 3, 4, 1.0);
        let b = gaussian_matrix(&mut rng.reset(), 3, 4, 2.0);
        assert_eq!(b, a * 2.0);
    }

    #[test]
    fn moments_of_a_million_samples() {
        let mut rng = Rng::from_seed(2024);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.normal();
            s += z;
            s2 += z * z;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 4e-3, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn distinct_streams_pass_two_sample_mean_test() {
        let base = Rng::from_seed(99);
        let mut a = base.derive(1);
        let mut b = base.derive(2);
        assert_ne!(a.stream_id(), b.stream_id());
        let n = 100_000;
        let ma: f64 = (0..n).map(|_| a.normal()).sum::<f64>() / n as f64;
        let mb: f64 = (0..n).map(|_| b.normal()).sum::<f64>() / n as f64;
        let se = (2.0 / n as f64).sqrt();
        assert!((ma - mb).abs() < 4.0 * se);
    }

    #[test]
    fn derived_streams_differ_from_parent() {
        let base = Rng::new(5, 0);
        let mut p = base.reset();
        let mut c = base.derive(0);
        let x: Vec<u64> = (0..4).map(|_| p.next_u64()).collect();
        let y: Vec<u64> = (0..4).map(|_| c.next_u64()).collect();
        assert_ne!(x, y);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = Rng::from_seed(1);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
