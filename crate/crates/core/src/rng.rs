//! Seeded random streams.
//!
//! Every random draw in the crate goes through an [`RngStream`]: an immutable
//! `(seed, stream)` token that is turned into a ChaCha8 generator on demand.
//! ChaCha has a native 64-bit stream counter, so Monte Carlo trials can use
//! independent stream ids without coordinating with each other.
//!
//! Sampling recipes are fixed so sequences stay stable across releases:
//!
//! * the 256-bit ChaCha key is expanded from the seed with SplitMix64;
//! * uniforms take the top 53 bits of `next_u64` and scale by 2^-53;
//! * standard normals use the basic Box–Muller transform, emitting the cosine
//!   branch first and caching the sine branch, with `libm` transcendental
//!   functions so results do not depend on the platform math library.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// A reproducible source of randomness identified by `(seed, stream)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derives an independent stream for a labelled sub-task.
    ///
    /// The child keeps the seed and hashes `(stream, tag)` into a new stream id,
    /// so `child(a).child(b)` and `child(b).child(a)` differ.
    pub fn child(&self, tag: u64) -> Self {
        let mut state = self.stream ^ tag.rotate_left(32);
        let a = splitmix64(&mut state);
        let mut state = a ^ tag;
        Self {
            seed: self.seed,
            stream: splitmix64(&mut state),
        }
    }

    /// Convenience for two-level keys such as `(trial, ratio index)`.
    pub fn child2(&self, a: u64, b: u64) -> Self {
        self.child(a).child(b)
    }

    /// Starts a fresh sampler at the beginning of this stream.
    pub fn sampler(&self) -> Sampler {
        let mut state = self.seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        Sampler { rng, spare: None }
    }
}

/// Stateful sampler created from an [`RngStream`].
pub struct Sampler {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Sampler {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }

    pub fn fill_normal(&mut self, out: &mut [f64], scale: f64) {
        for v in out {
            *v = scale * self.standard_normal();
        }
    }

    /// Uniform integer in `0..bound` by rejection, free of modulo bias.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0);
        let bound = bound as u64;
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let v = self.rng.next_u64();
            if v <= zone {
                return (v % bound) as usize;
            }
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
