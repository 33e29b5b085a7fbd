//! Reproducible random streams keyed by `(seed, replication, purpose)`.
//!
//! Every stream is a ChaCha8 generator whose key is derived from the run
//! seed and whose 64-bit stream selector encodes the replication index and
//! the purpose tag. Distinct selectors address disjoint keystreams, so
//! streams never overlap, and ChaCha output is specified bit-for-bit, so
//! sequences are identical on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Arrivals,
    Services,
    Patience,
    Initial,
    Gaussian,
    /// Second independent Gaussian source (service-noise limit paths).
    GaussianAux,
}

impl Purpose {
    const ALL: [Purpose; 6] = [
        Purpose::Arrivals,
        Purpose::Services,
        Purpose::Patience,
        Purpose::Initial,
        Purpose::Gaussian,
        Purpose::GaussianAux,
    ];

    fn tag(self) -> u64 {
        Self::ALL.iter().position(|p| *p == self).unwrap() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub replication: u64,
    pub purpose: Purpose,
}

/// A seeded generator for one `(replication, purpose)` pair.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, replication: u64, purpose: Purpose) -> Self {
        let id = StreamId {
            replication,
            purpose,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // 8 purpose slots per replication; replication indices up to 2^61.
        rng.set_stream((replication << 3) | purpose.tag());
        RandomStream { seed, id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// A uniform variate in the open interval `(0, 1)`.
    pub fn open01(&mut self) -> f64 {
        loop {
            // 53 random mantissa bits
            let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// The per-replication bundle of streams used by the simulator.
#[derive(Debug, Clone)]
pub struct StreamSet {
    pub arrivals: RandomStream,
    pub services: RandomStream,
    pub patience: RandomStream,
    pub initial: RandomStream,
}

impl StreamSet {
    pub fn new(seed: u64, replication: u64) -> Self {
        StreamSet {
            arrivals: RandomStream::new(seed, replication, Purpose::Arrivals),
            services: RandomStream::new(seed, replication, Purpose::Services),
            patience: RandomStream::new(seed, replication, Purpose::Patience),
            initial: RandomStream::new(seed, replication, Purpose::Initial),
        }
    }
}
