//! Site configurations: a bit-packed array for boxes that fit in memory and
//! a lazy view that hashes occupations on demand for huge tori. Both read the
//! same bits, so a lazy configuration agrees site by site with its packed copy.

use crate::error::{invalid, Result};
use crate::lattice::BoxSpec;
use crate::rng::{site_bits, RngStream, Threshold};

pub trait Occupancy {
    fn spec(&self) -> &BoxSpec;
    fn is_occupied(&self, site: u64) -> bool;
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiteConfig {
    spec: BoxSpec,
    p: f64,
    words: Vec<u64>,
}

/// Largest box we are willing to pack into memory (bits).
pub const MAX_PACKED_SITES: u64 = 1 << 34;

impl SiteConfig {
    pub fn empty(spec: &BoxSpec, p: f64) -> Result<Self> {
        let n = spec.n_sites();
        if n > MAX_PACKED_SITES {
            return invalid(format!("{n} sites is too many for a packed configuration"));
        }
        Ok(SiteConfig { spec: spec.clone(), p, words: vec![0; n.div_ceil(64) as usize] })
    }

    /// Each site occupied independently with probability p; a pure function
    /// of (rng, sample).
    pub fn sample(spec: &BoxSpec, p: f64, rng: &RngStream, sample: u64) -> Result<Self> {
        Self::sample_slot(spec, p, rng, sample, 0)
    }

    pub fn sample_slot(spec: &BoxSpec, p: f64, rng: &RngStream, sample: u64, slot: u64) -> Result<Self> {
        let thr = Threshold::new(p)?;
        let mut cfg = Self::empty(spec, p)?;
        let key = rng.config_key(sample, slot);
        for site in 0..spec.n_sites() {
            if thr.accepts(site_bits(key, site)) {
                cfg.words[(site / 64) as usize] |= 1 << (site % 64);
            }
        }
        Ok(cfg)
    }

    /// Configuration with exactly the given sites occupied (tests, enumeration).
    pub fn from_sites(spec: &BoxSpec, sites: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut cfg = Self::empty(spec, f64::NAN)?;
        for s in sites {
            cfg.set(s, true)?;
        }
        Ok(cfg)
    }

    /// Configuration whose occupied set is given by the low bits of `mask`.
    pub fn from_mask(spec: &BoxSpec, mask: u64) -> Result<Self> {
        let mut cfg = Self::empty(spec, f64::NAN)?;
        if spec.n_sites() > 64 {
            return invalid("mask constructor needs at most 64 sites");
        }
        cfg.words[0] = mask;
        Ok(cfg)
    }

    pub fn set(&mut self, site: u64, occupied: bool) -> Result<()> {
        if site >= self.spec.n_sites() {
            return invalid(format!("site {site} outside box"));
        }
        let w = &mut self.words[(site / 64) as usize];
        if occupied {
            *w |= 1 << (site % 64);
        } else {
            *w &= !(1 << (site % 64));
        }
        Ok(())
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n_occupied(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

impl Occupancy for SiteConfig {
    fn spec(&self) -> &BoxSpec {
        &self.spec
    }
    #[inline]
    fn is_occupied(&self, site: u64) -> bool {
        (self.words[(site / 64) as usize] >> (site % 64)) & 1 == 1
    }
}

/// Occupations computed from the hash on every query.
#[derive(Clone, Debug)]
pub struct LazyConfig {
    spec: BoxSpec,
    thr: Threshold,
    key: u64,
}

impl LazyConfig {
    pub fn new(spec: &BoxSpec, p: f64, rng: &RngStream, sample: u64, slot: u64) -> Result<Self> {
        Ok(LazyConfig { spec: spec.clone(), thr: Threshold::new(p)?, key: rng.config_key(sample, slot) })
    }
}

impl Occupancy for LazyConfig {
    fn spec(&self) -> &BoxSpec {
        &self.spec
    }
    #[inline]
    fn is_occupied(&self, site: u64) -> bool {
        self.thr.accepts(site_bits(self.key, site))
    }
}

/// Free function form of [`SiteConfig::sample`].
pub fn sample_config(spec: &BoxSpec, p: f64, rng: &RngStream, sample: u64) -> Result<SiteConfig> {
    SiteConfig::sample(spec, p, rng, sample)
}
