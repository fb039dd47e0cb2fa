pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod fsm;
pub mod geometry;
pub mod rewards;
pub mod rl;
pub mod sim;
pub mod trainer;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream `stream` of the generator seeded with `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
