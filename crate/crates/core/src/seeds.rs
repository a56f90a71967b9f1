//! Deterministic RNG streams.
//!
//! Every run `(horizon, seed)` under a master seed gets one ChaCha8 key, and
//! each randomness consumer inside the run reads its own stream of that key,
//! so adding draws to one component never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Environment = 0,
    FpaBandit = 1,
    DpBandit = 2,
    Baseline = 3,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key for run `(horizon, seed)`.
pub fn run_key(master: u64, horizon: u64, seed: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ horizon) ^ seed)
}

pub fn stream(master: u64, horizon: u64, seed: u64, component: Component) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_key(master, horizon, seed));
    rng.set_stream(component as u64);
    rng
}
