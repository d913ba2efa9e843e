//! Fully associative TLB with tree-PLRU replacement.

use serde::{Deserialize, Serialize};

use super::plru::PlruTree;
use super::DomainId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TlbEntry {
    pub valid: bool,
    pub vpn: u64,
    pub domain: DomainId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tlb {
    entries: Vec<TlbEntry>,
    plru: PlruTree,
}

impl Tlb {
    pub fn new(entries: usize) -> Self {
        Self {
            entries: vec![TlbEntry::default(); entries],
            plru: PlruTree::new(entries),
        }
    }

    pub fn capacity(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[TlbEntry] {
        &self.entries
    }

    pub fn plru(&self) -> &PlruTree {
        &self.plru
    }

    pub fn contains(&self, vpn: u64, domain: DomainId) -> bool {
        self.find(vpn, domain).is_some()
    }

    fn find(&self, vpn: u64, domain: DomainId) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.valid && e.vpn == vpn && e.domain == domain)
    }

    /// Returns whether the translation hit.
    pub fn access(&mut self, vpn: u64, domain: DomainId) -> bool {
        if let Some(slot) = self.find(vpn, domain) {
            self.plru.touch(slot);
            return true;
        }
        let slot = self
            .entries
            .iter()
            .position(|e| !e.valid)
            .unwrap_or_else(|| self.plru.victim());
        self.entries[slot] = TlbEntry {
            valid: true,
            vpn,
            domain,
        };
        self.plru.touch(slot);
        false
    }

    /// Invalidates all entries; the PLRU tree is left alone.
    pub fn invalidate(&mut self) {
        self.entries
            .iter_mut()
            .for_each(|e| *e = TlbEntry::default());
    }

    pub fn reset_plru(&mut self) {
        self.plru.reset();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const D: DomainId = DomainId(0);

    #[test]
    fn empty_misses_then_hits() {
        let mut t = Tlb::new(16);
        assert!(!t.access(7, D));
        assert!(t.access(7, D));
        assert!(!t.access(7, DomainId(1)), "translations are per domain");
    }

    #[test]
    fn capacity_sixteen() {
        let mut t = Tlb::new(16);
        for vpn in 0..16 {
            assert!(!t.access(vpn, D));
        }
        assert!(t.access(1, D));
    }

    #[test]
    fn seventeenth_entry_replaces_plru_victim() {
        let mut t = Tlb::new(16);
        let mut oracle = PlruTree::new(16);
        for vpn in 0..16 {
            t.access(vpn, D);
            oracle.touch(vpn as usize);
        }
        let victim = oracle.victim();
        let evicted_vpn = t.entries()[victim].vpn;
        assert!(!t.access(100, D));
        assert_eq!(t.entries()[victim].vpn, 100);
        assert!(!t.contains(evicted_vpn, D));
        oracle.touch(victim);
        assert_eq!(t.plru(), &oracle);
    }

    proptest! {
        #[test]
        fn no_duplicate_translations(ops in proptest::collection::vec((0u64..40, 0u8..2), 1..300)) {
            let mut t = Tlb::new(16);
            for (vpn, d) in ops {
                t.access(vpn, DomainId(d));
                let valid: Vec<_> = t.entries().iter().filter(|e| e.valid).map(|e| (e.vpn, e.domain)).collect();
                let mut dedup = valid.clone();
                dedup.sort();
                dedup.dedup();
                prop_assert_eq!(valid.len(), dedup.len());
            }
        }
    }
}
