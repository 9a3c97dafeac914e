//! Seeded random streams.
//!
//! All randomness flows through [`SimRng`], a ChaCha generator. ChaCha is
//! counter based and exposes independent 64-bit streams per key, which gives
//! cheap hierarchical derivation: a run seed fixes the key and each consumer
//! (episode, agent, worker) gets its own stream id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Root generator for a run seed.
pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Independent child stream `stream` of the run seeded with `seed`.
pub fn derive(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for a (component, index) pair, e.g. (episode stream, episode 12).
pub fn stream_id(component: u32, index: u32) -> u64 {
    ((component as u64) << 32) | index as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| derive(7, 3).random()).collect();
        let mut r1 = derive(7, 3);
        let mut r2 = derive(7, 3);
        let mut r3 = derive(7, 4);
        let x: u64 = r1.random();
        assert_eq!(x, r2.random::<u64>());
        assert_ne!(x, r3.random::<u64>());
        assert!(a.iter().all(|v| *v == a[0]));
    }
}
