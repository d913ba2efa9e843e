//! Complete core state with a total architectural / non-architectural partition.

use serde::{Deserialize, Serialize};

use super::config::MicroArchConfig;
use crate::uarch::wbuf::WRITE_BUFFER_CAPACITY;
use crate::uarch::{
    Addr, Bht, Btb, DigestBuilder, DigestSubset, DomainId, MissHandler, RoundRobinArbiter,
    SetAssocCache, StateDigest, StateTag, Tlb, WriteBuffer,
};

/// Requestors of the data-cache memory arbiter.
pub const UNIT_LOAD: usize = 0;
pub const UNIT_STORE: usize = 1;
pub const UNIT_MMU: usize = 2;

/// Every field is declared exactly once with its tag; digesting and the
/// Microreset clear both iterate this list, so a new field cannot be
/// forgotten by either.
macro_rules! micro_state {
    ($( $(#[$meta:meta])* $field:ident : $ty:ty => $tag:ident, )*) => {
        #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
        pub struct MicroState {
            $( $(#[$meta])* pub $field: $ty, )*
        }

        impl MicroState {
            pub const FIELDS: &'static [(&'static str, StateTag)] =
                &[ $( (stringify!($field), StateTag::$tag), )* ];

            pub fn digest(&self, subset: DigestSubset) -> StateDigest {
                let mut b = DigestBuilder::new();
                $(
                    if subset.includes(StateTag::$tag) {
                        b.field(stringify!($field), &self.$field);
                    }
                )*
                b.finish()
            }

            /// Overwrites every field carrying `tag` with the value in `from`.
            pub fn restore_partition(&mut self, tag: StateTag, from: &MicroState) {
                $(
                    if StateTag::$tag == tag {
                        self.$field = from.$field.clone();
                    }
                )*
            }
        }
    };
}

micro_state! {
    l1d: SetAssocCache => NonArchitectural,
    l1i: SetAssocCache => NonArchitectural,
    dtlb: Tlb => NonArchitectural,
    itlb: Tlb => NonArchitectural,
    bht: Bht => NonArchitectural,
    btb: Btb => NonArchitectural,
    /// Load unit, store unit and MMU competing for the data cache.
    mem_arbiter: RoundRobinArbiter => NonArchitectural,
    wbuf: WriteBuffer => NonArchitectural,
    miss_handler: MissHandler => NonArchitectural,
    pipeline_occupancy: u32 => NonArchitectural,
    pc: Addr => Architectural,
    saved_pc: Addr => Architectural,
    int_regfile_token: u64 => Architectural,
    fp_regfile_token: u64 => Architectural,
    csr_file: u64 => Architectural,
    pad_ctrl: u32 => Architectural,
    cycle_counter: u64 => Architectural,
    current_domain: DomainId => Architectural,
}

impl MicroState {
    /// Power-on state.
    pub fn reset(config: &MicroArchConfig) -> Self {
        let frozen = config.pin_secondary;
        let cache = |g: &super::config::CacheGeometry| {
            SetAssocCache::new(g.sets, g.ways, g.line_bytes, g.policy).with_frozen_lfsr(frozen)
        };
        Self {
            l1d: cache(&config.l1d),
            l1i: cache(&config.l1i),
            dtlb: Tlb::new(config.dtlb_entries),
            itlb: Tlb::new(config.itlb_entries),
            bht: Bht::new(config.bht_entries),
            btb: Btb::new(config.btb_entries),
            mem_arbiter: RoundRobinArbiter::new(3),
            wbuf: WriteBuffer::new(WRITE_BUFFER_CAPACITY),
            miss_handler: MissHandler::default(),
            pipeline_occupancy: 0,
            pc: 0,
            saved_pc: 0,
            int_regfile_token: 0,
            fp_regfile_token: 0,
            csr_file: 0,
            pad_ctrl: 0,
            cycle_counter: 0,
            current_domain: DomainId::SPY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_is_total_and_matches_the_architectural_list() {
        let arch: Vec<&str> = MicroState::FIELDS
            .iter()
            .filter(|(_, t)| *t == StateTag::Architectural)
            .map(|(n, _)| *n)
            .collect();
        assert_eq!(
            arch,
            vec![
                "pc",
                "saved_pc",
                "int_regfile_token",
                "fp_regfile_token",
                "csr_file",
                "pad_ctrl",
                "cycle_counter",
                "current_domain"
            ]
        );
        let mut names: Vec<_> = MicroState::FIELDS.iter().map(|(n, _)| *n).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), MicroState::FIELDS.len());
    }

    #[test]
    fn fresh_states_share_digests() {
        let c = MicroArchConfig::default();
        let a = MicroState::reset(&c);
        let b = MicroState::reset(&c);
        for s in [
            DigestSubset::All,
            DigestSubset::Architectural,
            DigestSubset::NonArchitectural,
        ] {
            assert_eq!(a.digest(s), b.digest(s));
        }
    }

    #[test]
    fn single_bit_flip_only_moves_the_non_architectural_digest() {
        let c = MicroArchConfig::default();
        let a = MicroState::reset(&c);
        let mut b = a.clone();
        b.l1d.lines_mut()[17].dirty = true;
        assert_ne!(
            a.digest(DigestSubset::NonArchitectural),
            b.digest(DigestSubset::NonArchitectural)
        );
        assert_eq!(
            a.digest(DigestSubset::Architectural),
            b.digest(DigestSubset::Architectural)
        );
        assert_ne!(a.digest(DigestSubset::All), b.digest(DigestSubset::All));
    }

    #[test]
    fn architectural_change_leaves_non_architectural_digest() {
        let c = MicroArchConfig::default();
        let a = MicroState::reset(&c);
        let mut b = a.clone();
        b.pad_ctrl = 22_000;
        assert_eq!(
            a.digest(DigestSubset::NonArchitectural),
            b.digest(DigestSubset::NonArchitectural)
        );
        assert_ne!(
            a.digest(DigestSubset::Architectural),
            b.digest(DigestSubset::Architectural)
        );
    }

    #[test]
    fn restore_partition_touches_only_its_tag() {
        let c = MicroArchConfig::default();
        let fresh = MicroState::reset(&c);
        let mut s = fresh.clone();
        s.pipeline_occupancy = 4;
        s.cycle_counter = 99;
        s.restore_partition(StateTag::NonArchitectural, &fresh);
        assert_eq!(s.pipeline_occupancy, 0);
        assert_eq!(s.cycle_counter, 99);
    }
}
