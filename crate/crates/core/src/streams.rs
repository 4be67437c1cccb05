//! Deterministic random streams.
//!
//! Every stochastic step draws from a ChaCha8 stream addressed by
//! `(master seed, purpose, index)`. Replicate `i` of any Monte Carlo loop
//! always reads stream `i`, so results do not depend on how work is split
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// The single retained jittered realization.
    Reference,
    /// Jitter replicates of the pilot cross-validation.
    Pilot,
    /// Smoothed bootstrap samples for the bandwidth objective.
    BandwidthBootstrap,
    /// Smoothed bootstrap samples for the interval pivots.
    IntervalBootstrap,
    /// Synthetic data generation.
    Simulation,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Reference => 1,
            Purpose::Pilot => 2,
            Purpose::BandwidthBootstrap => 3,
            Purpose::IntervalBootstrap => 4,
            Purpose::Simulation => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The generator for replicate `index` of `purpose`.
    pub fn stream(&self, purpose: Purpose, index: u64) -> ChaCha8Rng {
        debug_assert!(index < 1 << 48);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((purpose.code() << 48) | index);
        rng
    }

    /// An independent family of streams, e.g. one per simulated model.
    pub fn child(&self, index: u64) -> RngStreams {
        RngStreams::new(splitmix64(
            self.seed ^ splitmix64(index.wrapping_add(0x6a09_e667_f3bc_c909)),
        ))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
