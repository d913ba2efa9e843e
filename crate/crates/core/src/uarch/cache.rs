//! Set-associative L1 cache model with LFSR-driven pseudo-random replacement.
//!
//! Only tags and metadata are modelled; the observable is hit/miss timing.

use serde::{Deserialize, Serialize};

use super::lfsr::Lfsr8;
use super::{Addr, DomainId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WritePolicy {
    WriteThrough,
    WriteBack,
}

impl WritePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            WritePolicy::WriteThrough => "write_through",
            WritePolicy::WriteBack => "write_back",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheLine {
    pub valid: bool,
    pub dirty: bool,
    pub tag: u64,
    pub domain: DomainId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheAccess {
    pub hit: bool,
    /// The displaced line was valid and dirty and had to be written back.
    pub victim_dirty_writeback: bool,
    /// `(set, way)` of a valid line displaced by this access.
    pub evicted: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SetAssocCache {
    sets: usize,
    ways: usize,
    line_bytes: u64,
    policy: WritePolicy,
    lines: Vec<CacheLine>,
    lfsr: Lfsr8,
    /// Victim selection reads the LFSR without advancing it. Used to strip
    /// replacement noise when checking the ideal prime-and-probe latency.
    #[serde(skip)]
    frozen_lfsr: bool,
}

impl SetAssocCache {
    pub fn new(sets: usize, ways: usize, line_bytes: u64, policy: WritePolicy) -> Self {
        assert!(sets.is_power_of_two() && ways.is_power_of_two() && line_bytes.is_power_of_two());
        assert!(
            ways <= 256,
            "LFSR victim selection supports at most 256 ways"
        );
        Self {
            sets,
            ways,
            line_bytes,
            policy,
            lines: vec![CacheLine::default(); sets * ways],
            lfsr: Lfsr8::default(),
            frozen_lfsr: false,
        }
    }

    pub fn with_frozen_lfsr(mut self, frozen: bool) -> Self {
        self.frozen_lfsr = frozen;
        self
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn line_bytes(&self) -> u64 {
        self.line_bytes
    }

    pub fn policy(&self) -> WritePolicy {
        self.policy
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.sets as u64 * self.ways as u64 * self.line_bytes
    }

    pub fn lfsr(&self) -> Lfsr8 {
        self.lfsr
    }

    pub fn set_index(&self, addr: Addr) -> usize {
        ((addr / self.line_bytes) % self.sets as u64) as usize
    }

    pub fn tag(&self, addr: Addr) -> u64 {
        addr / self.line_bytes / self.sets as u64
    }

    pub fn line(&self, set: usize, way: usize) -> &CacheLine {
        &self.lines[set * self.ways + way]
    }

    fn set_lines(&self, set: usize) -> &[CacheLine] {
        &self.lines[set * self.ways..(set + 1) * self.ways]
    }

    pub fn lookup(&self, addr: Addr) -> Option<usize> {
        let tag = self.tag(addr);
        self.set_lines(self.set_index(addr))
            .iter()
            .position(|l| l.valid && l.tag == tag)
    }

    pub fn contains(&self, addr: Addr) -> bool {
        self.lookup(addr).is_some()
    }

    pub fn valid_in_set(&self, set: usize) -> usize {
        self.set_lines(set).iter().filter(|l| l.valid).count()
    }

    pub fn dirty_count(&self) -> usize {
        self.lines.iter().filter(|l| l.dirty).count()
    }

    pub fn valid_count(&self) -> usize {
        self.lines.iter().filter(|l| l.valid).count()
    }

    /// On a miss the victim is the first invalid way, otherwise the way
    /// picked by the LFSR. The LFSR steps on every miss either way, so its
    /// phase records the miss history.
    pub fn access(&mut self, addr: Addr, is_write: bool, domain: DomainId) -> CacheAccess {
        let set = self.set_index(addr);
        let tag = self.tag(addr);
        let write_back = self.policy == WritePolicy::WriteBack;

        if let Some(way) = self.lookup(addr) {
            if is_write && write_back {
                self.lines[set * self.ways + way].dirty = true;
            }
            return CacheAccess {
                hit: true,
                ..CacheAccess::default()
            };
        }

        let victim_bits = self.ways.trailing_zeros();
        let lfsr_way = if self.frozen_lfsr {
            self.lfsr.peek(victim_bits)
        } else {
            self.lfsr.next(victim_bits)
        };
        let way = self
            .set_lines(set)
            .iter()
            .position(|l| !l.valid)
            .unwrap_or(lfsr_way);

        let slot = &mut self.lines[set * self.ways + way];
        let outcome = CacheAccess {
            hit: false,
            victim_dirty_writeback: slot.valid && slot.dirty,
            evicted: slot.valid.then_some((set, way)),
        };
        *slot = CacheLine {
            valid: true,
            dirty: is_write && write_back,
            tag,
            domain,
        };
        outcome
    }

    /// Writes back every dirty line, then invalidates the whole array.
    /// Returns the number of lines written back.
    pub fn writeback_all(&mut self) -> usize {
        let dirty = self.dirty_count();
        self.lines
            .iter_mut()
            .for_each(|l| *l = CacheLine::default());
        dirty
    }

    pub fn reset_lfsr(&mut self) {
        self.lfsr = Lfsr8::default();
    }

    #[cfg(test)]
    pub(crate) fn lines_mut(&mut self) -> &mut [CacheLine] {
        &mut self.lines
    }
}
