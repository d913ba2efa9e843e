//! Branch history table and branch target buffer.

use serde::{Deserialize, Serialize};

use super::Addr;

/// Reset value of every BHT counter: weakly not-taken.
pub const BHT_INIT: u8 = 1;

/// Table of 2-bit saturating counters indexed by the low pc bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bht {
    counters: Vec<u8>,
}

impl Bht {
    pub fn new(entries: usize) -> Self {
        assert!(entries.is_power_of_two());
        Self {
            counters: vec![BHT_INIT; entries],
        }
    }

    pub fn len(&self) -> usize {
        self.counters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counters.is_empty()
    }

    pub fn index(&self, pc: Addr) -> usize {
        (pc as usize) & (self.counters.len() - 1)
    }

    pub fn counter(&self, pc: Addr) -> u8 {
        self.counters[self.index(pc)]
    }

    /// Predicts, updates and returns whether the prediction was wrong.
    pub fn access(&mut self, pc: Addr, taken: bool) -> bool {
        let i = self.index(pc);
        let c = self.counters[i];
        let predicted_taken = c >= 2;
        self.counters[i] = if taken {
            (c + 1).min(3)
        } else {
            c.saturating_sub(1)
        };
        predicted_taken != taken
    }

    pub fn clear(&mut self) {
        self.counters.iter_mut().for_each(|c| *c = BHT_INIT);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BtbEntry {
    pub valid: bool,
    pub tag: u64,
    pub target: Addr,
}

/// Direct-mapped branch target buffer; slot = pc mod entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Btb {
    entries: Vec<BtbEntry>,
}

impl Btb {
    pub fn new(entries: usize) -> Self {
        assert!(entries.is_power_of_two());
        Self {
            entries: vec![BtbEntry::default(); entries],
        }
    }

    pub fn entries(&self) -> &[BtbEntry] {
        &self.entries
    }

    fn slot_and_tag(&self, pc: Addr) -> (usize, u64) {
        let n = self.entries.len() as u64;
        ((pc % n) as usize, pc / n)
    }

    /// Returns whether the jump target was mispredicted; installs it either way.
    pub fn access(&mut self, pc: Addr, target: Addr) -> bool {
        let (slot, tag) = self.slot_and_tag(pc);
        let e = &mut self.entries[slot];
        let predicted = e.valid && e.tag == tag && e.target == target;
        *e = BtbEntry {
            valid: true,
            tag,
            target,
        };
        !predicted
    }

    pub fn clear(&mut self) {
        self.entries
            .iter_mut()
            .for_each(|e| *e = BtbEntry::default());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fresh_counter_mispredicts_taken() {
        let mut b = Bht::new(64);
        assert!(b.access(0x40, true));
        assert_eq!(b.counter(0x40), 2);
    }

    #[test]
    fn four_taken_in_a_row() {
        // Counter walk from 1: predict NT (miss) -> 2, T -> 3, T -> 3, T -> 3.
        let mut b = Bht::new(64);
        let misses: Vec<bool> = (0..4).map(|_| b.access(9, true)).collect();
        assert_eq!(misses, vec![true, false, false, false]);
    }

    #[test]
    fn btb_cases() {
        let mut b = Btb::new(16);
        assert!(b.access(0x100, 0x2000));
        assert!(!b.access(0x100, 0x2000));
        assert!(b.access(0x100, 0x3000));
        assert_eq!(b.entries()[0].target, 0x3000);
        // Aliasing pc in the same slot with a different tag.
        assert!(b.access(0x110, 0x3000));
        assert!(b.access(0x100, 0x3000));
    }

    proptest! {
        #[test]
        fn counters_saturate(ops in proptest::collection::vec((0u64..256, any::<bool>()), 0..500)) {
            let mut b = Bht::new(64);
            for (pc, t) in ops {
                b.access(pc, t);
                prop_assert!(b.counter(pc) <= 3);
            }
        }
    }
}
