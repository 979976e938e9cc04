//! Counter-based random streams.
//!
//! A stream is identified by `(seed, agent, iteration)` plus a domain tag that
//! separates unrelated uses of the same seed (gradient sampling, instance
//! generation, initial points). The triple is written directly into a ChaCha8
//! key, so every stream is a pure function of its identifiers and streams can
//! be opened in any order, on any thread, with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tag for the random draws that make up a stochastic gradient.
pub const DOMAIN_GRADIENT: u64 = 0;
/// Domain tag for problem-instance generation.
pub const DOMAIN_INSTANCE: u64 = 1;
/// Domain tag for initial iterates.
pub const DOMAIN_INIT: u64 = 2;
/// Domain tag for random graph generation.
pub const DOMAIN_GRAPH: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub agent: u64,
    pub iteration: u64,
    pub domain: u64,
}

impl RngStream {
    /// Gradient-sampling stream for `agent` at `iteration`.
    pub fn new(seed: u64, agent: usize, iteration: usize) -> Self {
        Self::with_domain(seed, agent as u64, iteration as u64, DOMAIN_GRADIENT)
    }

    pub fn with_domain(seed: u64, agent: u64, iteration: u64, domain: u64) -> Self {
        Self {
            seed,
            agent,
            iteration,
            domain,
        }
    }

    /// Opens the generator. Calling this twice yields two identical generators.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.agent.to_le_bytes());
        key[16..24].copy_from_slice(&self.iteration.to_le_bytes());
        key[24..32].copy_from_slice(&self.domain.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}
