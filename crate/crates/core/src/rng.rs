//! Seed splitting.
//!
//! A run seed `s` owns one ChaCha key; the environment and every player draw
//! from distinct streams of that key, so a player's decisions never depend on
//! how many values the environment consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const ENV_STREAM: u64 = 0;

fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Substream driving arm draws.
pub fn env_rng(seed: u64) -> SimRng {
    stream(seed, ENV_STREAM)
}

/// Substream owned by player `j`.
pub fn player_rng(seed: u64, j: usize) -> SimRng {
    stream(seed, 1 + j as u64)
}

/// Substream for auxiliary randomness (instance generation and the like),
/// kept far away from player streams.
pub fn aux_rng(seed: u64, id: u64) -> SimRng {
    stream(seed, u64::MAX - id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(env_rng(5), |r, _| Some(r.gen()))
            .collect();
        let b: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(env_rng(5), |r, _| Some(r.gen()))
            .collect();
        let c: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(player_rng(5, 0), |r, _| Some(r.gen()))
            .collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut p1 = player_rng(5, 1);
        let mut p1b = player_rng(5, 1);
        let _: u64 = env_rng(5).gen();
        assert_eq!(p1.gen::<u64>(), p1b.gen::<u64>());
    }
}
