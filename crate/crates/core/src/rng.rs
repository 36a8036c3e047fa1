//! Seeded random streams.
//!
//! Every simulated quantity is drawn from a [`SimRng`], a ChaCha8 stream
//! keyed by a 64-bit seed. ChaCha is a counter-mode generator: the output
//! block `i` depends only on `(key, i)`, so a stream is fully determined by
//! its seed and independent streams can be derived per record with
//! [`mix_seed`] and consumed in any order or on any thread.

use num_complex::Complex64;
use rand::{seq::SliceRandom, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and an index tuple.
///
/// Each component is absorbed through a SplitMix64 round, so tuples that
/// differ in any position (or in order) give unrelated seeds.
pub fn mix_seed(master: u64, parts: &[u64]) -> u64 {
    let mut acc = splitmix64(master.wrapping_add(GOLDEN_GAMMA));
    for &p in parts {
        acc = splitmix64(acc ^ splitmix64(p.wrapping_add(GOLDEN_GAMMA)));
    }
    acc
}

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[low, high]` (inclusive).
    pub fn int_inclusive(&mut self, low: usize, high: usize) -> usize {
        self.inner.gen_range(low..=high)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn coin(&mut self) -> bool {
        self.inner.next_u32() & 1 == 1
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Two independent standard normals via the Box–Muller transform.
    pub fn standard_normal_pair(&mut self) -> (f64, f64) {
        // 1 - U lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Circularly-symmetric complex Gaussian with `E|z|^2 = variance`.
    pub fn complex_gaussian(&mut self, variance: f64) -> Complex64 {
        let (a, b) = self.standard_normal_pair();
        let s = (variance / 2.0).sqrt();
        Complex64::new(a * s, b * s)
    }
}
