//! Counter-based random streams addressed by a hierarchical path.
//!
//! A stream is keyed by `(seed, path)`; its output is a pure function of the
//! key and the number of draws taken so far. Samplers derive one stream per
//! unit of parallel work (particle, chain, sample chunk), so results do not
//! depend on how work is scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies a stream without materializing it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    path: Vec<u64>,
}

impl StreamKey {
    pub fn new(seed: u64, path: &[u64]) -> Self {
        StreamKey {
            seed,
            path: path.to_vec(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Key extended by one more path component.
    pub fn child(&self, index: u64) -> StreamKey {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(index);
        StreamKey {
            seed: self.seed,
            path,
        }
    }

    pub fn stream(&self) -> RandomStream {
        derive_stream(self.seed, &self.path)
    }
}

/// Deterministic random stream (ChaCha8 keyed by a hash of seed and path).
#[derive(Debug, Clone)]
pub struct RandomStream {
    inner: ChaCha8Rng,
}

/// Builds the stream for `(seed, path)`. Equal arguments give equal draws.
pub fn derive_stream(seed: u64, path: &[u64]) -> RandomStream {
    // Length goes into the hash so [0] and [0, 0] differ.
    let mut h = mix64(seed ^ GOLDEN);
    h = mix64(h ^ (path.len() as u64).wrapping_mul(GOLDEN));
    for (depth, &component) in path.iter().enumerate() {
        h = mix64(
            h.wrapping_add(GOLDEN)
                ^ mix64(component.wrapping_add((depth as u64 + 1).wrapping_mul(GOLDEN))),
        );
    }
    let mut key = [0u8; 32];
    let mut state = h;
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(GOLDEN);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    RandomStream {
        inner: ChaCha8Rng::from_seed(key),
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

impl RandomStream {
    /// Uniform draw on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            let u = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        use rand_distr::Distribution;
        rand_distr::StandardNormal.sample(self)
    }
}
