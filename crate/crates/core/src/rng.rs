//! Seeded random streams. Every random draw in the crate goes through
//! ChaCha20 seeded from a caller-provided `u64`; independent purposes use
//! distinct stream ids so they never share keystream.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type DetRng = ChaCha20Rng;

pub mod stream {
    pub const NOISE: u64 = 1;
    pub const LARGE_SCALE: u64 = 2;
    pub const CLUSTERS: u64 = 3;
    pub const PHASES: u64 = 4;
    /// Dataset snapshots use `SNAPSHOT_BASE + index`.
    pub const SNAPSHOT_BASE: u64 = 1 << 32;
}

pub fn seeded(seed: u64, stream: u64) -> DetRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
