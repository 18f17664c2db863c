//! Named, splittable random streams.
//!
//! Every source of randomness is a ChaCha8 stream keyed by a 64-bit seed and
//! a stream name. ChaCha is counter based, so the same `(seed, name)` pair
//! yields identical bits on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn stream_id(name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Deterministic generator for the stream `name` under `seed`.
pub fn stream(seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}

/// Generator for a numbered sub-stream, e.g. one per Monte-Carlo replicate.
pub fn substream(seed: u64, name: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(stream_id(name));
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_name_same_bits() {
        let a: Vec<u64> = (0..8).map({
            let mut r = stream(7, "costs");
            move |_| r.random()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = stream(7, "costs");
            move |_| r.random()
        }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn names_split_streams() {
        let x: u64 = stream(7, "costs").random();
        let y: u64 = stream(7, "delays").random();
        assert_ne!(x, y);
        let z: u64 = substream(7, "mc", 1).random();
        let w: u64 = substream(7, "mc", 2).random();
        assert_ne!(z, w);
    }
}
