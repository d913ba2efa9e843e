use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Classification of every state element. Microreset clears exactly the
/// non-architectural partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateTag {
    Architectural,
    NonArchitectural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DigestSubset {
    NonArchitectural,
    Architectural,
    All,
}

impl DigestSubset {
    pub fn includes(self, tag: StateTag) -> bool {
        match self {
            DigestSubset::All => true,
            DigestSubset::Architectural => tag == StateTag::Architectural,
            DigestSubset::NonArchitectural => tag == StateTag::NonArchitectural,
        }
    }
}

/// SHA-256 over a canonical serialization of a state subset.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateDigest(pub [u8; 32]);

impl fmt::Display for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateDigest({self})")
    }
}

/// Accumulates named fields in the order they are fed.
pub struct DigestBuilder {
    hasher: Sha256,
}

impl DigestBuilder {
    pub fn new() -> Self {
        Self {
            hasher: Sha256::new(),
        }
    }

    pub fn field<T: Serialize>(&mut self, name: &str, value: &T) {
        let bytes = bincode::serialize(value).expect("state fields are always serializable");
        self.hasher.update((name.len() as u64).to_le_bytes());
        self.hasher.update(name.as_bytes());
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(&bytes);
    }

    pub fn finish(self) -> StateDigest {
        StateDigest(self.hasher.finalize().into())
    }
}

impl Default for DigestBuilder {
    fn default() -> Self {
        Self::new()
    }
}
