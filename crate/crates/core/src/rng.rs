//! Named, independent random streams derived from one seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream names used inside the crate.
pub mod streams {
    pub const WORLD: &str = "world-gen";
    pub const SPLIT: &str = "split-sampling";
    pub const VIEW_ORDER: &str = "view-order";
    pub const STEREO_NOISE: &str = "stereo-noise";
    pub const PERTURB: &str = "perturb";
}

/// A deterministic generator for `(seed, name)`; different names never share
/// a stream.
pub fn stream(seed: u64, name: &str) -> StreamRng {
    // FNV-1a over the name, folded with the seed through splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut key = [0u8; 32];
    let mut s = seed ^ h.rotate_left(17);
    for chunk in key.chunks_mut(8) {
        s = s.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
