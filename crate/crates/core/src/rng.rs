//! Deterministic seed derivation.
//!
//! Every parallel work item gets its own generator seeded from
//! `(master_seed, stream, index)`, so results never depend on which worker
//! picked up which item.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep seeds for unrelated stages from colliding.
pub mod stream {
    pub const SUBSAMPLE: u64 = 0x5355_4253;
    pub const TUNE: u64 = 0x5455_4e45;
    pub const ENRICH: u64 = 0x454e_5243;
    pub const GENOTYPE: u64 = 0x4745_4e4f;
    pub const PHENOTYPE: u64 = 0x5048_454e;
    pub const FOLDS: u64 = 0x464f_4c44;
    pub const ANNOTATION: u64 = 0x414e_4e4f;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

pub fn rng_for(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
