//! Search bounds shared by the library stages.

use serde::{Deserialize, Serialize};

use crate::localfield::SamplerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    /// Largest magnitude handed to the factoring routine.
    pub factor: u64,
    /// Largest prime (or cofactor) tried by the prime and field searches.
    pub prime_search: u64,
    /// Local truncations use moduli `p^k <= 2^precision_bits`.
    pub precision_bits: u32,
    /// Candidate `x`-values tried per local decision.
    pub candidates: usize,
    /// Extra generators the Sha pipeline may forge beyond `r`.
    pub pool: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { factor: u64::MAX, prime_search: 1_000_000, precision_bits: 62, candidates: 20_000, pool: 6 }
    }
}

impl Bounds {
    pub fn sampler(&self, seed: u64) -> SamplerConfig {
        SamplerConfig { budget: self.candidates, bits: self.precision_bits, seed }
    }
}
