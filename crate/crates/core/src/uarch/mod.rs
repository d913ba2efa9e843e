//! Timing-relevant hardware components of a small in-order core.

use serde::{Deserialize, Serialize};

pub mod arbiter;
pub mod cache;
pub mod digest;
pub mod lfsr;
pub mod plru;
pub mod predictor;
pub mod tlb;
pub mod wbuf;

pub use arbiter::RoundRobinArbiter;
pub use cache::{CacheAccess, CacheLine, SetAssocCache, WritePolicy};
pub use digest::{DigestBuilder, DigestSubset, StateDigest, StateTag};
pub use lfsr::Lfsr8;
pub use plru::PlruTree;
pub use predictor::{Bht, Btb};
pub use tlb::Tlb;
pub use wbuf::{MissHandler, WriteBuffer};

/// Flat 64-bit address.
pub type Addr = u64;

pub const PAGE_BYTES: u64 = 4096;

/// Security domain (address space) identifier.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct DomainId(pub u8);

impl DomainId {
    pub const SPY: DomainId = DomainId(0);
    pub const TROJAN: DomainId = DomainId(1);
    pub const KERNEL: DomainId = DomainId(0xff);

    /// Each domain owns a disjoint 4 GiB region. Index bits below 4 GiB are
    /// shared, so on-core structures still collide across domains.
    pub fn region_base(self) -> Addr {
        (self.0 as u64 + 1) << 32
    }

    pub fn owns(self, addr: Addr) -> bool {
        addr >> 32 == self.0 as u64 + 1
    }
}
