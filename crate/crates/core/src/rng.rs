//! Counter-based splittable random stream.
//!
//! Every random draw in the crate goes through [`RngStream`]. The generator is
//! a SplitMix64-style counter scheme: the i-th output is a bijective mix of
//! `key + i * GOLDEN`, so a stream's outputs depend only on its key and how
//! many values it has produced. Substreams are derived by hashing a text label
//! into a fresh key; forking never touches the parent's counter, so the order
//! in which sibling streams are consumed cannot perturb each other.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const FORK_SALT: u64 = 0xA076_1D64_78BD_642F;

/// Deterministic random stream with labeled forking.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            key: mix(seed.wrapping_add(GOLDEN)),
            counter: 0,
        }
    }

    /// Derive an independent substream. Does not advance this stream.
    pub fn fork(&self, label: &str) -> RngStream {
        let key = mix(mix(self.key ^ FORK_SALT) ^ fnv1a(label.as_bytes()));
        RngStream { key, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform on (0, 1].
    pub fn next_f64(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box-Muller. Consumes exactly two raw values per
    /// sample so the stream position is independent of caller batching.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Tensor of i.i.d. normal samples.
    pub fn sample_gaussian(&mut self, shape: &[usize], mean: f64, std: f64) -> Result<Tensor> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "sample_gaussian: non-positive dimension in shape {shape:?}"
            )));
        }
        if !(std >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample_gaussian: std must be >= 0, got {std}"
            )));
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(mean + std * self.next_gaussian());
        }
        Tensor::new(shape.to_vec(), data)
    }
}
