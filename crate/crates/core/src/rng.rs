//! Named random streams derived from one master seed.
//!
//! Every consumer of randomness draws from its own stream, and every sample
//! path (or grid point) inside a stream gets its own generator keyed by its
//! index. Results therefore never depend on thread count or on which other
//! consumers ran first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Imbalance sequences.
    Imbalance,
    /// Priority permutations between equally priced firms.
    Tie,
    /// Prices drawn from mixed strategies.
    Strategy,
}

impl Stream {
    fn label(self) -> u64 {
        // Fixed labels: changing them changes every published result.
        match self {
            Stream::Imbalance => 0x696d_6261_6c61_6e63,
            Stream::Tie => 0x7469_655f_6272_6561,
            Stream::Strategy => 0x7374_7261_7465_6779,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for item `index` of `stream` under `master`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream.label()) ^ index)
}

/// Generator for item `index` of `stream` under `master`.
pub fn stream_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
