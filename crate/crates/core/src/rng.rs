//! Seeded random streams.
//!
//! Every random draw in the pipeline flows from one 64-bit seed. Each purpose
//! (surface sampling, needle offsets, free-space points, initialization) gets
//! its own substream so that changing how one stream is consumed never shifts
//! the others.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Named substream purposes used by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Surface,
    Offsets,
    FreeSpace,
    Init,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::Surface => "surface",
            Stream::Offsets => "offsets",
            Stream::FreeSpace => "free-space",
            Stream::Init => "init",
        }
    }
}

/// Splits a master seed into independent, named, indexed substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSplitter {
    master: u64,
}

impl SeedSplitter {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// 64-bit seed for `(stream, index)`.
    pub fn seed(&self, stream: Stream, index: u64) -> u64 {
        let digest = self.digest(stream.name(), index);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn rng(&self, stream: Stream, index: u64) -> StreamRng {
        StreamRng::from_seed(self.digest(stream.name(), index))
    }

    fn digest(&self, name: &str, index: u64) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.master.to_le_bytes());
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update(index.to_le_bytes());
        hasher.finalize().into()
    }
}

/// Convenience: a generator seeded directly from a 64-bit value.
pub fn rng_from_seed(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
