//! Order-independent seed derivation.
//!
//! A [`SeedTree`] node is a 32-byte key. Children are derived by hashing the parent
//! key with a label and an index, so the stream used by e.g. client 17 in round 3
//! of seed 5 depends only on those coordinates and never on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree {
    key: [u8; 32],
}

impl SeedTree {
    pub fn new(master_seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"robandit/master");
        h.update(master_seed.to_le_bytes());
        SeedTree {
            key: h.finalize().into(),
        }
    }

    pub fn child(&self, label: &str, index: u64) -> SeedTree {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update(index.to_le_bytes());
        SeedTree {
            key: h.finalize().into(),
        }
    }

    /// Generator for a labelled child stream with a string tag, e.g. a variant name.
    pub fn tagged(&self, label: &str, tag: &str) -> SeedTree {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update((tag.len() as u64).to_le_bytes());
        h.update(tag.as_bytes());
        SeedTree {
            key: h.finalize().into(),
        }
    }

    /// ChaCha generator keyed by this node, on the given stream.
    pub fn rng(&self, stream: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(stream);
        rng
    }
}
