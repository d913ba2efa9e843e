use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timeprot::machine::kernel::prepare_worst_case;
use timeprot::machine::{
    measure_worst_case_pad, FenceKind, FenceVariant, Machine, MachineError, MicroArchConfig,
    MicroState, WorkloadOp,
};
use timeprot::uarch::{DigestSubset, DomainId, WritePolicy, PAGE_BYTES};

fn op(kind: u8, off: u64, flag: bool, domain: DomainId) -> WorkloadOp {
    let base = domain.region_base();
    let a = base + (off & !0x3) % (1 << 20);
    match kind % 5 {
        0 => WorkloadOp::Read(a),
        1 => WorkloadOp::Write(a),
        2 => WorkloadOp::CondBranch(a, flag),
        3 => WorkloadOp::IndirectJump(a, base + (off >> 7) % (1 << 16)),
        _ => WorkloadOp::FetchAt(a),
    }
}

fn ops(domain: DomainId, max: usize) -> impl Strategy<Value = Vec<WorkloadOp>> {
    prop::collection::vec((any::<u8>(), any::<u64>(), any::<bool>()), 0..max)
        .prop_map(move |v| v.into_iter().map(|(k, o, f)| op(k, o, f, domain)).collect())
}

fn random_ops(rng: &mut ChaCha8Rng, domain: DomainId, max: usize) -> Vec<WorkloadOp> {
    let n = rng.gen_range(0..max);
    (0..n)
        .map(|_| op(rng.gen(), rng.gen(), rng.gen(), domain))
        .collect()
}

fn policy() -> impl Strategy<Value = WritePolicy> {
    prop_oneof![
        Just(WritePolicy::WriteThrough),
        Just(WritePolicy::WriteBack)
    ]
}

fn trojan_machine(c: MicroArchConfig) -> Machine {
    let mut m = Machine::new(c).unwrap();
    m.set_current_domain(DomainId::TROJAN);
    m
}

/// Architectural fields except the cycle counter and the PC save slot.
fn arch_without_clock(s: &MicroState) -> MicroState {
    let mut s = s.clone();
    s.cycle_counter = 0;
    s.saved_pc = 0;
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn microreset_restores_the_power_on_state(p in policy(), prefix in ops(DomainId::TROJAN, 400)) {
        let mut m = trojan_machine(MicroArchConfig::with_policy(p));
        m.run_sequence(&prefix, DomainId::TROJAN).unwrap();
        m.apply_fence_t(FenceVariant::new(FenceKind::Microreset)).unwrap();
        prop_assert_eq!(m.digest(DigestSubset::NonArchitectural), m.reset_digest(DigestSubset::NonArchitectural));
    }

    #[test]
    fn fences_preserve_architectural_state(p in policy(), prefix in ops(DomainId::TROJAN, 200), k in 0usize..5) {
        let kind = FenceKind::ALL[k];
        prop_assume!(kind.is_hardware_fence());
        let mut m = trojan_machine(MicroArchConfig::with_policy(p));
        m.run_sequence(&prefix, DomainId::TROJAN).unwrap();
        m.state_mut().csr_file = 0xabcd;
        m.state_mut().int_regfile_token = prefix.len() as u64;
        let before = m.state().clone();
        let out = m.apply_fence_t(FenceVariant::new(kind)).unwrap();
        let after = m.state().clone();
        prop_assert_eq!(after.cycle_counter, before.cycle_counter + out.fence_cycles);
        if kind == FenceKind::Microreset {
            prop_assert_eq!(after.saved_pc, before.pc);
        } else {
            prop_assert_eq!(after.saved_pc, before.saved_pc);
        }
        let (mut a, mut b) = (arch_without_clock(&before), arch_without_clock(&after));
        a.restore_partition(timeprot::uarch::StateTag::NonArchitectural, &b);
        prop_assert_eq!(a.digest(DigestSubset::Architectural), b.digest(DigestSubset::Architectural));
        b.restore_partition(timeprot::uarch::StateTag::NonArchitectural, &a);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn padded_context_switch_has_constant_latency(p in policy(), prefix in ops(DomainId::TROJAN, 300)) {
        let c = MicroArchConfig::with_policy(p);
        let fence = FenceVariant::new(FenceKind::Microreset);
        let pad = measure_worst_case_pad(&c, fence).unwrap().pad;
        let mut m = trojan_machine(c);
        m.run_sequence(&prefix, DomainId::TROJAN).unwrap();
        m.set_pad(pad as u32);
        let r = m.context_switch(fence, DomainId::SPY).unwrap();
        prop_assert_eq!(r.total_cycles, pad);
        prop_assert!(r.padded);
        prop_assert_eq!(m.current_domain(), DomainId::SPY);
    }

    #[test]
    fn cache_line_invariants_hold(p in policy(), prefix in ops(DomainId::TROJAN, 400)) {
        let mut m = trojan_machine(MicroArchConfig::with_policy(p));
        m.run_sequence(&prefix, DomainId::TROJAN).unwrap();
        let s = m.state();
        for cache in [&s.l1d, &s.l1i] {
            for set in 0..cache.sets() {
                for way in 0..cache.ways() {
                    let l = cache.line(set, way);
                    prop_assert!(!l.dirty || l.valid);
                    prop_assert!(!l.valid || l.domain == DomainId::TROJAN);
                }
            }
        }
        if p == WritePolicy::WriteThrough {
            prop_assert_eq!(s.l1d.dirty_count(), 0);
        }
        prop_assert_eq!(s.l1i.dirty_count(), 0);
    }

    #[test]
    fn sequences_compose(p in policy(), a in ops(DomainId::TROJAN, 100), b in ops(DomainId::TROJAN, 100)) {
        let mut whole = trojan_machine(MicroArchConfig::with_policy(p));
        let mut split = whole.clone();
        let ab: Vec<_> = a.iter().chain(&b).copied().collect();
        let t = whole.run_sequence(&ab, DomainId::TROJAN).unwrap();
        let t1 = split.run_sequence(&a, DomainId::TROJAN).unwrap();
        let t2 = split.run_sequence(&b, DomainId::TROJAN).unwrap();
        prop_assert_eq!(t, t1 + t2);
        prop_assert_eq!(whole.state(), split.state());
        prop_assert_eq!(whole.cycles(), t);
    }

    #[test]
    fn foreign_addresses_are_rejected(off in any::<u64>(), kind in any::<u8>()) {
        let mut m = trojan_machine(MicroArchConfig::default());
        let before = m.state().clone();
        let foreign = op(kind, off, true, DomainId::SPY);
        let err = m.exec_op(foreign, DomainId::TROJAN).unwrap_err();
        let rejected = matches!(err, MachineError::OutsideRegion { domain: 1, .. });
        prop_assert!(rejected);
        prop_assert_eq!(m.state(), &before);
    }
}

#[test]
fn only_the_running_domain_may_issue() {
    let mut m = Machine::new(MicroArchConfig::default()).unwrap();
    let a = DomainId::TROJAN.region_base();
    assert_eq!(
        m.exec_op(WorkloadOp::Read(a), DomainId::TROJAN),
        Err(MachineError::DomainNotRunning {
            requested: 1,
            running: 0
        })
    );
}

#[test]
fn microreset_after_a_thousand_random_prefixes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in [WritePolicy::WriteThrough, WritePolicy::WriteBack] {
        let fresh = Machine::new(MicroArchConfig::with_policy(p))
            .unwrap()
            .reset_digest(DigestSubset::NonArchitectural);
        for _ in 0..500 {
            let mut m = trojan_machine(MicroArchConfig::with_policy(p));
            let prefix = random_ops(&mut rng, DomainId::TROJAN, 300);
            m.run_sequence(&prefix, DomainId::TROJAN).unwrap();
            m.apply_fence_t(FenceVariant::new(FenceKind::Microreset))
                .unwrap();
            assert_eq!(m.digest(DigestSubset::NonArchitectural), fresh);
        }
    }
}

/// Two Trojan histories that touch different lines.
fn two_histories(c: MicroArchConfig, fence: FenceKind) -> (Machine, Machine) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut out = Vec::new();
    for seed_ops in [
        random_ops(&mut rng, DomainId::TROJAN, 400),
        random_ops(&mut rng, DomainId::TROJAN, 400),
    ] {
        let mut m = trojan_machine(c);
        let base = DomainId::TROJAN.region_base();
        let extra: Vec<_> = (0..64)
            .map(|i| WorkloadOp::Write(base + i * 64 + 3 * PAGE_BYTES))
            .collect();
        m.run_sequence(&seed_ops, DomainId::TROJAN).unwrap();
        m.run_sequence(&extra, DomainId::TROJAN).unwrap();
        m.apply_fence_t(FenceVariant::new(fence)).unwrap();
        out.push(m);
    }
    let b = out.pop().unwrap();
    (out.pop().unwrap(), b)
}

#[test]
fn basic_flush_leaves_history_in_secondary_state() {
    for p in [WritePolicy::WriteThrough, WritePolicy::WriteBack] {
        let (a, b) = two_histories(MicroArchConfig::with_policy(p), FenceKind::BasicFlush);
        assert_ne!(
            a.digest(DigestSubset::NonArchitectural),
            b.digest(DigestSubset::NonArchitectural)
        );
        for m in [&a, &b] {
            assert_eq!(m.state().l1d.valid_count(), 0);
            assert_eq!(m.state().l1i.valid_count(), 0);
        }
    }
}

#[test]
fn full_flush_without_trace_forgets_history() {
    let c = MicroArchConfig::write_back();
    assert!(!c.miss_handler_trace);
    let (a, b) = two_histories(c, FenceKind::FullFlush);
    assert_eq!(
        a.digest(DigestSubset::NonArchitectural),
        b.digest(DigestSubset::NonArchitectural)
    );
}

#[test]
fn microreset_histories_collapse() {
    let (a, b) = two_histories(MicroArchConfig::write_through(), FenceKind::Microreset);
    assert_eq!(
        a.digest(DigestSubset::NonArchitectural),
        b.digest(DigestSubset::NonArchitectural)
    );
}

#[test]
fn replay_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let prefix = random_ops(&mut rng, DomainId::TROJAN, 2000);
    let run = || {
        let mut m = trojan_machine(MicroArchConfig::write_through());
        let t = m.run_sequence(&prefix, DomainId::TROJAN).unwrap();
        let r = m
            .context_switch(FenceVariant::new(FenceKind::BasicFlush), DomainId::SPY)
            .unwrap();
        (t, r, m.digest(DigestSubset::All))
    };
    assert_eq!(run(), run());
}

#[test]
fn calibrated_pad_holds_over_random_histories() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for p in [WritePolicy::WriteThrough, WritePolicy::WriteBack] {
        let c = MicroArchConfig::with_policy(p);
        for kind in FenceKind::ALL {
            let fence = FenceVariant::new(kind);
            let pad = measure_worst_case_pad(&c, fence).unwrap().pad as u32;
            let mut m = trojan_machine(c);
            for _ in 0..10_000 {
                let prefix = random_ops(&mut rng, m.current_domain(), 64);
                let next = if m.current_domain() == DomainId::SPY {
                    DomainId::TROJAN
                } else {
                    DomainId::SPY
                };
                m.run_sequence(&prefix, m.current_domain()).unwrap();
                m.set_pad(pad);
                let r = m.context_switch(fence, next).unwrap();
                assert_eq!(r.total_cycles, pad as u64, "{kind} {p:?}");
            }
        }
    }
}

#[test]
fn pad_below_worst_case_is_detected() {
    for p in [WritePolicy::WriteThrough, WritePolicy::WriteBack] {
        let c = MicroArchConfig::with_policy(p);
        let fence = FenceVariant::new(FenceKind::Microreset);
        let w = measure_worst_case_pad(&c, fence).unwrap();
        let mut m = Machine::new(c).unwrap();
        prepare_worst_case(&mut m).unwrap();
        m.set_pad(w.worst_case_cycles as u32 - 1);
        assert_eq!(
            m.context_switch(fence, DomainId::SPY),
            Err(MachineError::PadExceeded { overshoot: 1 })
        );
    }
}
