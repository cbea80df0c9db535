//! Seed derivation. Every random stream in the crate descends from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for the stream named `tag`, index `idx`.
pub fn derive_seed(master: u64, tag: &str, idx: u64) -> u64 {
    let mut h = splitmix(master);
    for b in tag.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    splitmix(h ^ idx)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(master: u64, tag: &str, idx: u64) -> Rng {
    rng(derive_seed(master, tag, idx))
}
