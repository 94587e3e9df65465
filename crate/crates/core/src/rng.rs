//! Seeded, stream-separated randomness.
//!
//! Every consumer owns its own [`RngStream`]. Streams are ChaCha8 keyed by the
//! seed with the stream id selecting an independent keystream, so
//! `(seed, stream_id)` pins the whole sequence. Normal deviates come from the
//! Ziggurat sampler of `rand_distr`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::Matrix;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream keyed by this stream's seed and a derived id. Does not
    /// advance `self`.
    pub fn fork(&self, salt: u64) -> RngStream {
        RngStream::new(self.seed, mix64(self.stream_id ^ mix64(salt)))
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    #[inline]
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }
}

impl RngCore for RngStream {
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

/// `mu + L·z` with `z` i.i.d. standard normal.
pub fn gaussian_vector(rng: &mut RngStream, mu: &[f64], chol_lower: &Matrix) -> Vec<f64> {
    assert_eq!(chol_lower.rows(), mu.len());
    assert_eq!(chol_lower.cols(), mu.len());
    let z = rng.normal_vec(mu.len());
    let mut out = mu.to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        // L is lower triangular; only the leading i+1 entries contribute.
        let row = &chol_lower.row(i)[..=i];
        *o += row.iter().zip(&z).map(|(l, z)| l * z).sum::<f64>();
    }
    out
}

/// SplitMix64 finalizer; used to derive stream ids from structured keys.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable 64-bit FNV-1a hash of a string key.
pub fn stable_hash(key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}
