//! Seed derivation for independent, reproducible random streams.
//!
//! Every stream is a ChaCha20 generator keyed by a 64-bit seed mixed from a
//! master seed and a path of integer labels, so drops, fading blocks and
//! solver initializations never share state regardless of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type SimRng = ChaCha20Rng;

/// Recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha), splitmix64-derived per-stream seeds";

pub mod stream {
    pub const NETWORK: u64 = 0x6e65_7477;
    pub const FADING: u64 = 0x6661_6465;
    pub const SOLVER: u64 = 0x736f_6c76;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a label path into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_streams_differ_and_repeat() {
        let a = derive_seed(7, &[stream::NETWORK, 3]);
        let b = derive_seed(7, &[stream::FADING, 3]);
        let c = derive_seed(7, &[3, stream::NETWORK]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, &[stream::NETWORK, 3]));
        let x: u64 = rng_from_seed(a).random();
        let y: u64 = rng_from_seed(a).random();
        assert_eq!(x, y);
    }
}
