// SPDX-License-Identifier: Apache-2.0

//! Seeded random streams. Every stage derives its own stream from the run
//! seed and a stage tag so that reordering one stage does not perturb another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, tag: &str, index: u64) -> Rng {
    let mut h = mix(seed);
    for b in tag.bytes() {
        h = mix(h ^ u64::from(b));
    }
    h = mix(h ^ index);
    Rng::seed_from_u64(h)
}
