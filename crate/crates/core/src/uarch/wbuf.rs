//! Write buffer of the write-through data cache and the data-cache miss handler.

use serde::{Deserialize, Serialize};

use super::arbiter::RoundRobinArbiter;
use super::Addr;

pub const WRITE_BUFFER_CAPACITY: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WbEntry {
    pub addr: Addr,
    pub pending: bool,
}

/// Fixed-capacity store queue. A line always maps to slot `line mod capacity`;
/// the lookup arbiter serves load-side searches, the drain arbiter picks the
/// entry written out next.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WriteBuffer {
    entries: Vec<WbEntry>,
    lookup_arb: RoundRobinArbiter,
    drain_arb: RoundRobinArbiter,
}

impl WriteBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: vec![WbEntry::default(); capacity],
            lookup_arb: RoundRobinArbiter::new(capacity),
            drain_arb: RoundRobinArbiter::new(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.entries.len()
    }

    pub fn slot(&self, line: u64) -> usize {
        (line % self.entries.len() as u64) as usize
    }

    pub fn pending(&self) -> usize {
        self.entries.iter().filter(|e| e.pending).count()
    }

    pub fn entries(&self) -> &[WbEntry] {
        &self.entries
    }

    pub fn lookup_arb(&self) -> &RoundRobinArbiter {
        &self.lookup_arb
    }

    pub fn drain_arb(&self) -> &RoundRobinArbiter {
        &self.drain_arb
    }

    /// Queues a store to `line`; any older entry in its slot is written out
    /// first. Returns the drain-arbitration delay, or 0 when `pinned`.
    pub fn store(&mut self, addr: Addr, line: u64, pinned: bool) -> u64 {
        let slot = self.slot(line);
        let delay = if pinned {
            0
        } else {
            self.drain_arb.grant(slot)
        };
        self.entries[slot] = WbEntry {
            addr,
            pending: true,
        };
        delay
    }

    /// Load-side search for a pending store to `line`. Returns the lookup
    /// arbitration delay, or 0 when `pinned`.
    pub fn lookup(&mut self, line: u64, pinned: bool) -> u64 {
        let slot = self.slot(line);
        if pinned {
            0
        } else {
            self.lookup_arb.grant(slot)
        }
    }

    /// Writes out every pending entry. Arbiter pointers are untouched.
    pub fn drain(&mut self) -> usize {
        let n = self.pending();
        self.entries
            .iter_mut()
            .for_each(|e| *e = WbEntry::default());
        n
    }

    pub fn reset_arbiters(&mut self) {
        self.lookup_arb.reset();
        self.drain_arb.reset();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InFlight {
    pub addr: Addr,
    pub issue_cycle: u64,
}

/// Holds at most one outstanding data-cache refill.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MissHandler {
    pub in_flight: Option<InFlight>,
}

impl MissHandler {
    pub fn issue(&mut self, addr: Addr, cycle: u64) {
        self.in_flight = Some(InFlight {
            addr,
            issue_cycle: cycle,
        });
    }

    pub fn retire(&mut self) -> Option<InFlight> {
        self.in_flight.take()
    }
}
