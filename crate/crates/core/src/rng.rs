//! Seeded, replayable random streams.
//!
//! A stream is identified by `(seed, stream)`. Sub-streams for distinct
//! purposes (mini-batch sampling, Gaussian noise, data draws) are derived
//! from that pair, never from the current state, so two runs that share a
//! seed also share every derived stream.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::linalg::Vector;

/// Well-known sub-stream purposes.
pub mod purpose {
    pub const BATCH: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const DATA: u64 = 3;
    pub const HELD_OUT: u64 = 4;
    pub const NEIGHBOR: u64 = 5;
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha12Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Independent stream for `purpose`, a pure function of `(seed, stream, purpose)`.
    pub fn substream(&self, purpose: u64) -> RngStream {
        let derived = splitmix64(self.seed ^ splitmix64(purpose.wrapping_mul(0xD6E8_FEB8_6659_FD93)));
        RngStream::new(derived, self.stream)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.inner.sample(StandardNormal);
        }
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

/// Draws from the isotropic normal `N(mean, variance * I)`.
///
/// A zero variance returns `mean` unchanged and consumes no randomness.
pub fn gaussian_vector(mean: &Vector, variance: f64, rng: &mut RngStream) -> Result<Vector> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(invalid("variance", format!("must be finite and >= 0, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(mean.clone());
    }
    let sd = variance.sqrt();
    let mut out = mean.clone();
    for v in out.as_mut_slice() {
        *v += sd * rng.standard_normal();
    }
    Ok(out)
}
