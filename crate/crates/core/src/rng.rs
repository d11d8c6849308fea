//! Counter-based Gaussian streams.
//!
//! Every path owns a ChaCha8 stream selected by its index, and every time step
//! consumes a fixed number of 32-bit words, so the normals of step `i` on path
//! `m` sit at a known word offset. Output never depends on how paths are
//! scheduled across threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const TWO_PI: f64 = std::f64::consts::TAU;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key_from_seed(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Uniform on the open interval (0, 1) from the top 52 bits.
fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Standard normal stream for one path.
pub struct PathNormals {
    rng: ChaCha8Rng,
    dim: usize,
}

impl PathNormals {
    /// Positions the stream at `step` for path `path`.
    pub fn new(seed: u64, path: u64, dim: usize, step: usize) -> Self {
        let mut rng = ChaCha8Rng::from_seed(key_from_seed(seed));
        rng.set_stream(path);
        rng.set_word_pos(step as u128 * words_per_step(dim));
        PathNormals { rng, dim }
    }

    /// Fills `out` (length `dim`) with the normals of the next step.
    pub fn next_step(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let mut k = 0;
        while k < self.dim {
            let u1 = open_unit(self.rng.next_u64());
            let u2 = open_unit(self.rng.next_u64());
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (TWO_PI * u2).sin_cos();
            out[k] = r * c;
            if k + 1 < self.dim {
                out[k + 1] = r * s;
            }
            k += 2;
        }
    }
}

/// 32-bit words consumed per step: two u64 per Box-Muller pair.
fn words_per_step(dim: usize) -> u128 {
    (dim.div_ceil(2) * 4) as u128
}

/// Uniform variates on (0, 1) for samplers and property checks.
pub struct Uniforms {
    rng: ChaCha8Rng,
}

impl Uniforms {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(key_from_seed(seed));
        rng.set_stream(stream);
        Uniforms { rng }
    }

    pub fn next_unit(&mut self) -> f64 {
        open_unit(self.rng.next_u64())
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_unit()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_unit();
        let u2 = self.next_unit();
        (-2.0 * u1.ln()).sqrt() * (TWO_PI * u2).cos()
    }
}

/// Random access to the normals of `(seed, path, step)`.
pub fn normals_at(seed: u64, path: u64, step: usize, out: &mut [f64]) {
    PathNormals::new(seed, path, out.len(), step).next_step(out);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_matches_random_access() {
        for dim in [1, 2, 3] {
            let mut seq = PathNormals::new(11, 5, dim, 0);
            let mut a = vec![0.0; dim];
            let mut b = vec![0.0; dim];
            for step in 0..17 {
                seq.next_step(&mut a);
                normals_at(11, 5, step, &mut b);
                assert_eq!(a, b, "dim {dim} step {step}");
            }
        }
    }

    #[test]
    fn streams_differ_by_path_and_seed() {
        let mut a = [0.0; 1];
        let mut b = [0.0; 1];
        normals_at(1, 0, 0, &mut a);
        normals_at(1, 1, 0, &mut b);
        assert_ne!(a, b);
        normals_at(2, 0, 0, &mut b);
        assert_ne!(a, b);
    }

    #[test]
    fn open_unit_stays_inside() {
        assert!(open_unit(0) > 0.0);
        assert!(open_unit(u64::MAX) < 1.0);
    }
}
