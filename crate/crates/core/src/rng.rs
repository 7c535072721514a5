//! Counter-style substreams: every random draw is attributable to a path of
//! indices under the master seed, so parallel and serial runs agree.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `path` under `seed`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Derives a child seed, used to hand a replication its own master seed.
pub fn child_seed(seed: u64, path: &[u64]) -> u64 {
    use rand::RngCore;
    substream(seed, path).next_u64()
}

pub mod domain {
    //! First path element for each consumer of randomness.
    pub const SUBJECT: u64 = 1;
    pub const REPLICATION: u64 = 2;
    pub const BOOTSTRAP: u64 = 3;
    pub const OPTIMIZER: u64 = 4;
}
