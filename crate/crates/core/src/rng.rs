//! Seeded random streams. Every worker draws from its own ChaCha stream so
//! results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs a sweep point and a batch index into one stream id.
pub fn stream_id(point: u32, batch: u32) -> u64 {
    ((point as u64) << 32) | batch as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream_rng(7, 1).random();
        let b: u64 = stream_rng(7, 1).random();
        let c: u64 = stream_rng(7, 2).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
