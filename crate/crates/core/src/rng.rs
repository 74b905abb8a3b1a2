//! Named, splittable seeding. Every random stream is derived from one root
//! seed and a path of labels, so adding a consumer never shifts another's
//! stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree(u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self(splitmix64(seed))
    }

    pub fn child(&self, label: &str) -> Self {
        Self(splitmix64(self.0 ^ fnv1a(label)))
    }

    pub fn index(&self, i: u64) -> Self {
        Self(splitmix64(self.0 ^ splitmix64(i.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
