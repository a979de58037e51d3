//! Seed derivation and the portable shuffle generator.
//!
//! Everything here is specified down to the constants so that another
//! implementation (in any language) can reproduce prompt orders and
//! per-episode seeds bit for bit.

/// Golden-ratio increment used by SplitMix64.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Multiplier of the xorshift64* output function.
pub const XORSHIFT_STAR_MULTIPLIER: u64 = 0x2545_F491_4F6C_DD1D;

/// Stream tag mixed into an episode seed to obtain its shuffle seed.
pub const SHUFFLE_STREAM: u64 = 0x5348_5546_464C_4531; // "SHUFFLE1"

/// Stream tag for the shared per-source latent of synthetic providers.
pub const LATENT_STREAM: u64 = 0x4C41_5445_4E54_5F31; // "LATENT_1"

/// SplitMix64 finalizer applied to `x + GOLDEN_GAMMA`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of episode `index` under `base`: `splitmix64(base + (index + 1) * GOLDEN_GAMMA)`.
pub fn episode_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Shuffle seed of an episode, decorrelated from the seed used for candidate draws.
pub fn shuffle_seed_for(episode_seed: u64) -> u64 {
    splitmix64(episode_seed ^ SHUFFLE_STREAM)
}

/// 64-bit FNV-1a, used to turn producer ids into stream tags.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// xorshift64* generator (shifts 12/25/27).
///
/// The state is initialised with `splitmix64(seed)`; a zero state, which
/// xorshift cannot leave, is replaced by `GOLDEN_GAMMA`.
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let state = match splitmix64(seed) {
            0 => GOLDEN_GAMMA,
            s => s,
        };
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(XORSHIFT_STAR_MULTIPLIER)
    }

    /// Uniform index in `0..bound` by multiply-shift (`(r * bound) >> 64`).
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        ((u128::from(self.next_u64()) * bound as u128) >> 64) as usize
    }
}

/// Fisher–Yates shuffle (descending `i`, swap with `below(i + 1)`).
pub fn fisher_yates<T>(items: &mut [T], seed: u64) {
    let mut rng = XorShift64Star::new(seed);
    for i in (1..items.len()).rev() {
        let j = rng.below(i + 1);
        items.swap(i, j);
    }
}
