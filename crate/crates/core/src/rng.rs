//! Seed derivation for reproducible benchmark generation.
//!
//! Every random draw in the generator comes from a [`ChaCha8Rng`] whose seed is
//! derived by hashing a path of labels and indices below a master seed:
//!
//! ```text
//! seed(node) = SHA-256("regbench-seed-v1" || parent_seed || label || 0x00 || index_le64)
//! ```
//!
//! A benchmark uses `master.child("dfa", i)` for DFA slot `i`,
//! `slot.child("attempt", a)` for the `a`-th DFA proposed in that slot, and
//! `attempt.child("instance", j)` / `attempt.child("pilot", 0)` for the task
//! instances. ChaCha8 output is specified bit-for-bit, so the same master seed
//! yields the same benchmark on every platform.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A node in the seed derivation tree.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree {
    seed: [u8; 32],
}

impl SeedTree {
    /// Root of the tree for a user-facing integer seed.
    pub fn from_master(master: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"regbench-master-v1");
        hasher.update(master.to_le_bytes());
        SeedTree {
            seed: hasher.finalize().into(),
        }
    }

    pub fn from_bytes(seed: [u8; 32]) -> Self {
        SeedTree { seed }
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let seed: [u8; 32] = bytes.try_into().ok()?;
        Some(SeedTree { seed })
    }

    pub fn child(&self, label: &str, index: u64) -> SeedTree {
        let mut hasher = Sha256::new();
        hasher.update(b"regbench-seed-v1");
        hasher.update(self.seed);
        hasher.update(label.as_bytes());
        hasher.update([0u8]);
        hasher.update(index.to_le_bytes());
        SeedTree {
            seed: hasher.finalize().into(),
        }
    }

    /// A fresh generator positioned at the start of this node's stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.seed)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.seed)
    }

    /// First eight bytes of the seed, used where an integer seed is wanted
    /// (bootstrap resampling, per-instance baseline randomness).
    pub fn as_u64(&self) -> u64 {
        u64::from_le_bytes(self.seed[..8].try_into().unwrap())
    }
}

impl fmt::Debug for SeedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SeedTree({})", &self.to_hex()[..16])
    }
}
