//! Seeded, label-addressed random streams.
//!
//! Every random quantity in the crate is drawn from a named substream so
//! that a run is reproducible from one master seed, and so that other
//! implementations can regenerate the exact same numbers:
//!
//! * A substream for `(seed, label)` is a ChaCha20 generator (RFC 8439
//!   block function, 64-bit counter, stream id 0) keyed by
//!   `SHA-256("netctrl/v1" || seed as u64 little-endian || label as UTF-8)`.
//! * Derived child seeds are the first 8 bytes (little-endian) of the same
//!   digest.
//! * A uniform double on `[0, 1)` is `(next_u64 >> 11) * 2^-53`.
//! * A standard normal is Box–Muller using the cosine branch only:
//!   `sqrt(-2 ln(1 - u1)) * cos(2π u2)` with two consecutive uniforms.
//! * Shuffles are Fisher–Yates from the last index down, swapping `i` with
//!   `floor(u * (i + 1))`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"netctrl/v1";

fn digest(seed: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN);
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let out = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&out);
    key
}

/// Child seed for a labelled purpose.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let d = digest(seed, label);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// A reproducible random stream.
#[derive(Clone, Debug)]
pub struct Stream {
    inner: ChaCha20Rng,
}

impl Stream {
    pub fn new(seed: u64, label: &str) -> Self {
        Stream {
            inner: ChaCha20Rng::from_seed(digest(seed, label)),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.standard_normal()).collect()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
