//! Seeded, splittable random streams.
//!
//! Every random consumer draws from its own ChaCha8 stream, addressed by a
//! domain tag and an index (snapshot number, trial number). Streams for
//! different `(domain, index)` pairs under one seed are independent, so a
//! snapshot or a Monte Carlo trial can be regenerated in isolation and
//! parallel execution does not change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Indices must stay below this bound so they do not collide with the domain bits.
pub const MAX_INDEX: u64 = 1 << 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Placement = 1,
    Shadowing = 2,
    SmallScale = 3,
    Trial = 4,
    Validation = 5,
}

pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    assert!(index < MAX_INDEX, "stream index {index} out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) | index);
    rng
}
