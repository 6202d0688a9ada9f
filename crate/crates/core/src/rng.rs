//! Named random substreams derived from one root seed.
//!
//! Every consumer of randomness gets its own ChaCha stream so that, for a
//! fixed seed, the environment sees the same arrivals, positions and
//! shadowing regardless of which algorithm drives the UEs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose of a substream. The discriminant is folded into the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Topology,
    Traffic,
    Exploration,
    Init,
    Replay,
    Central,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Topology => 1,
            Stream::Traffic => 2,
            Stream::Exploration => 3,
            Stream::Init => 4,
            Stream::Replay => 5,
            Stream::Central => 6,
        }
    }
}

/// Root of all randomness for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Stream shared by a whole subsystem.
    pub fn stream(&self, kind: Stream) -> ChaCha8Rng {
        self.indexed(kind, 0)
    }

    /// Stream owned by one entity (usually a UE id).
    pub fn indexed(&self, kind: Stream, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream((kind.tag() << 48) ^ index);
        rng
    }
}
