//! Counter-based random streams.
//!
//! Every stochastic unit of work (one sLLG trajectory, one synapse) gets its
//! own ChaCha stream keyed by `(seed, domain)` with the stream id set to the
//! unit's index, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
