//! Seeded random streams.
//!
//! Every stream is ChaCha20 (RFC 8439 block function, 64-bit counter as in
//! `rand_chacha`) keyed by `seed` (little-endian, bytes 0..8) and a domain
//! tag (little-endian, bytes 8..16), remaining key bytes zero. The 64-bit
//! stream id selects a substream. Uniform doubles take the top 53 bits of
//! one `u64` output; Gaussians use Box-Muller on two uniforms. This fully
//! determines every sample, so other implementations can regenerate a
//! corpus bit for bit.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Domain tags keep independent uses of the same seed apart.
pub mod domain {
    pub const CHANNEL: u64 = 0;
    pub const NOISE: u64 = 1;
    pub const SYMBOLS: u64 = 2;
    pub const SOLVER: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
}

pub struct Substream {
    rng: ChaCha20Rng,
}

impl Substream {
    pub fn new(seed: u64, domain: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&domain.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`, unbiased by rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let v = self.rng.next_u64();
            if v <= zone {
                return v % n;
            }
        }
    }

    /// Two independent standard normals.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        (r * c, r * s)
    }

    /// Circularly-symmetric `CN(0, variance)`.
    pub fn complex_normal(&mut self, variance: f64) -> Complex64 {
        let (a, b) = self.normal_pair();
        let s = (0.5 * variance).sqrt();
        Complex64::new(a * s, b * s)
    }
}
