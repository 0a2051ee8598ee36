//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha8 stream derived from
//! `(seed, purpose)`, so changing how one consumer uses randomness never shifts
//! another's sequence. In particular, arrivals and block errors of episode `e`
//! are identical across protocols evaluated under the same seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Arrivals and channel errors of one episode.
    Env(u64),
    /// Randomized protocol decisions of one episode.
    Policy(u64),
    /// Network weight initialization.
    Init,
    /// Epsilon-greedy exploration during training.
    Explore,
    /// Replay minibatch sampling.
    Replay,
    /// Environment regime switching in non-stationary runs.
    Regime,
    /// Anything else keyed by the caller.
    Custom(u64),
}

impl Stream {
    fn id(self) -> u64 {
        const TOP: u64 = 1 << 62;
        match self {
            Stream::Env(e) => e.wrapping_mul(2) % TOP,
            Stream::Policy(e) => (e.wrapping_mul(2) + 1) % TOP,
            Stream::Init => TOP,
            Stream::Explore => TOP + 1,
            Stream::Replay => TOP + 2,
            Stream::Regime => TOP + 3,
            Stream::Custom(k) => (TOP << 1) | (k % TOP),
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
