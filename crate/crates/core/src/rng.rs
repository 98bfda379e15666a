//! Keyed random streams.
//!
//! Each stream is a ChaCha8 keystream whose key is derived from a master seed
//! and a path of integers (cell, replicate, purpose, ...). Two streams with
//! different paths are independent, and a stream's output depends only on its
//! path, never on which thread consumes it or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc_inv;

/// Role tags used as the last path component of a stream key.
pub mod purpose {
    pub const POPULATION: u64 = 1;
    pub const SAMPLE: u64 = 2;
    pub const GAUSSIAN: u64 = 3;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a path of integers into a 64-bit seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = master;
    let mut acc = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(GOLDEN).rotate_left(17) ^ acc;
        acc = splitmix64(&mut state);
    }
    acc
}

/// A reproducible stream of uniforms and standard normals.
#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { rng: ChaCha8Rng::from_seed(key) }
    }

    pub fn keyed(master: u64, path: &[u64]) -> Self {
        Self::new(derive_seed(master, path))
    }

    /// Uniform on the open interval (0, 1), with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion of a single uniform.
    #[inline]
    pub fn std_normal(&mut self) -> f64 {
        std_normal_quantile(self.uniform())
    }
}

/// Inverse of the standard normal CDF on (0, 1).
#[inline]
pub fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}
