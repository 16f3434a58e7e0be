//! Counter-based substreams.
//!
//! Every random draw in a batch comes from a stream keyed by
//! `(master_seed, domain, index)`. Keys are derived with SplitMix64 mixing,
//! so any record can be regenerated without replaying earlier ones and the
//! assignment of records to workers never changes the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit tag for a string (FNV-1a, then mixed).
pub fn tag(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(h)
}

/// Domain separation for the different consumers of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain<'a> {
    /// World realizations (and sampled value parameters). Shared by every
    /// policy evaluated under the same master seed.
    World,
    /// Policy-internal noise such as intervention detection.
    Policy(&'a str),
    /// Bootstrap resample `index` of a statistic.
    Bootstrap,
}

impl Domain<'_> {
    fn tag(self) -> u64 {
        match self {
            Domain::World => tag("world"),
            Domain::Policy(id) => tag("policy") ^ tag(id).rotate_left(17),
            Domain::Bootstrap => tag("bootstrap"),
        }
    }
}

pub fn stream_key(master_seed: u64, domain: Domain<'_>, index: u64) -> u64 {
    let k = splitmix64(master_seed ^ 0x6A09_E667_F3BC_C908);
    let k = splitmix64(k ^ domain.tag());
    splitmix64(k ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn substream(master_seed: u64, domain: Domain<'_>, index: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(stream_key(master_seed, domain, index))
}
