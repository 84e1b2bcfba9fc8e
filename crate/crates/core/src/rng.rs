//! Deterministic, forkable randomness.
//!
//! Every random draw in the crate comes from a [`SeedStream`]. A stream is a
//! `(root_seed, stream_id)` pair that selects one ChaCha8 keystream: the root
//! seed keys the cipher and the stream id selects its 64-bit stream counter.
//! Substreams are derived with [`SeedStream::fork`], which hashes the parent
//! id together with a label, so sibling streams never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Named labels for the substreams used across the crate.
pub mod labels {
    pub const ENV: &str = "env";
    pub const INIT: &str = "init";
    pub const ENV_NOISE: &str = "env-noise";
    pub const COST_NOISE: &str = "cost-noise";
    pub const SURROGATE_FIT: &str = "surrogate-fit";
    pub const RFF: &str = "rff";
    pub const MATHERON_NOISE: &str = "matheron-noise";
    pub const POLICY_INIT: &str = "policy-init";
    pub const VMF: &str = "vmf";
    pub const RESTART: &str = "restart";
    pub const BASE_SAMPLES: &str = "base-samples";
    pub const WARMUP: &str = "warmup";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream {
    pub root_seed: u64,
    pub stream_id: u64,
}

impl SeedStream {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            stream_id: 0,
        }
    }

    pub fn with_id(root_seed: u64, stream_id: u64) -> Self {
        Self {
            root_seed,
            stream_id,
        }
    }

    /// Child stream for a numeric label. Pure: the same parent and label
    /// always give the same child.
    pub fn fork(&self, label: u64) -> Self {
        let mixed = splitmix64(self.stream_id ^ splitmix64(label.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        Self {
            root_seed: self.root_seed,
            stream_id: mixed,
        }
    }

    /// Child stream for a textual label (FNV-1a hashed).
    pub fn fork_named(&self, name: &str) -> Self {
        self.fork(fnv1a(name.as_bytes()))
    }

    /// `fork_named(name).fork(index)`; used for per-step and per-restart streams.
    pub fn fork_indexed(&self, name: &str, index: u64) -> Self {
        self.fork_named(name).fork(index)
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325_u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
