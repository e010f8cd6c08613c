//! Counter-based randomness.
//!
//! Site occupations are a pure function of (seed, stream, sample, slot, site),
//! so any sample can be regenerated without replaying a sequential generator
//! and results do not depend on how samples are spread over threads. The same
//! bits drive every p, which couples configurations monotonically in p.
//! Continuous draws (momentum integrals, random grids) use ChaCha8 seeded
//! from the same key.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    /// Key for one configuration: `slot` distinguishes independent
    /// configurations belonging to the same sample (e.g. the pair of a
    /// nested estimator).
    #[inline]
    pub fn config_key(&self, sample: u64, slot: u64) -> u64 {
        let a = mix64(self.seed ^ 0x5851_F42D_4C95_7F2D);
        let b = mix64(a ^ self.stream.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        let c = mix64(b ^ sample.wrapping_mul(0xA076_1D64_78BD_642F));
        mix64(c ^ slot.wrapping_mul(0xE703_7ED1_A0B4_28DB))
    }

    /// A generator for continuous draws tied to `sample`.
    pub fn chacha(&self, sample: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config_key(sample, u64::MAX));
        rng.set_stream(self.stream);
        rng
    }
}

#[inline]
pub fn site_bits(key: u64, site: u64) -> u64 {
    mix64(key ^ mix64(site))
}

/// Integer threshold so that `site_bits < threshold` has probability p.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Threshold {
    cut: u64,
    all: bool,
}

impl Threshold {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return invalid(format!("probability {p} outside [0,1]"));
        }
        if p >= 1.0 {
            return Ok(Threshold { cut: u64::MAX, all: true });
        }
        // p * 2^64, exact for dyadic p
        let cut = (p * 18_446_744_073_709_551_616.0) as u64;
        Ok(Threshold { cut, all: false })
    }

    #[inline]
    pub fn accepts(&self, bits: u64) -> bool {
        self.all || bits < self.cut
    }
}
