//! The kernel's context-switch routine and time padding.

use serde::{Deserialize, Serialize};

use super::fence::{FenceKind, FenceVariant};
use super::{Machine, MachineError, MicroArchConfig, WorkloadOp};
use crate::uarch::{Addr, DomainId};

/// Sets holding the kernel's data and instruction working sets.
pub const KERNEL_SETS: u64 = 32;
pub const KERNEL_DATA_LINES: usize = 64;
pub const KERNEL_INST_LINES: usize = 32;
const KERNEL_TEXT_OFFSET: Addr = 0x10_0000;
const SW_PRIME_DATA_OFFSET: Addr = 0x20_0000;
const SW_PRIME_INST_OFFSET: Addr = 0x30_0000;

/// `(data lines, instruction lines)` touched by the CLINT reconfiguration,
/// the scheduler and the thread switch.
const PHASE_LINES: [(usize, usize); 3] = [(40, 20), (17, 9), (7, 3)];

/// Data line `i` of the kernel sits in set `i mod 32`, two tags per set.
pub fn kernel_data_lines(config: &MicroArchConfig) -> Vec<Addr> {
    let line = config.l1d.line_bytes;
    let stride = config.l1d.sets as u64 * line;
    let base = DomainId::KERNEL.region_base();
    (0..KERNEL_DATA_LINES as u64)
        .map(|i| base + (i % KERNEL_SETS) * line + (i / KERNEL_SETS) * stride)
        .collect()
}

pub fn kernel_inst_lines(config: &MicroArchConfig) -> Vec<Addr> {
    let line = config.l1i.line_bytes;
    let base = DomainId::KERNEL.region_base() + KERNEL_TEXT_OFFSET;
    (0..KERNEL_INST_LINES as u64)
        .map(|i| base + i * line)
        .collect()
}

/// The software-only defence: the kernel traverses an L1D-sized and an
/// L1I-sized buffer `rounds` times. TLBs and predictors have no
/// architectural flush and are left alone.
pub fn sw_prime_ops(config: &MicroArchConfig, rounds: u32) -> Vec<WorkloadOp> {
    let base = DomainId::KERNEL.region_base();
    let d = &config.l1d;
    let i = &config.l1i;
    let mut ops = Vec::with_capacity(rounds as usize * (d.lines() + i.lines()));
    for _ in 0..rounds {
        ops.extend(
            (0..d.lines() as u64)
                .map(|k| WorkloadOp::Read(base + SW_PRIME_DATA_OFFSET + k * d.line_bytes)),
        );
        ops.extend(
            (0..i.lines() as u64)
                .map(|k| WorkloadOp::FetchAt(base + SW_PRIME_INST_OFFSET + k * i.line_bytes)),
        );
    }
    ops
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CsReport {
    pub total_cycles: u64,
    pub kernel_cycles: u64,
    /// CLINT reconfiguration, scheduling, thread switch.
    pub kernel_breakdown: [u64; 3],
    /// Fence or software-prime cycles.
    pub fence_cycles: u64,
    pub writebacks: usize,
    pub padded: bool,
    pub stall_cycles: u64,
    pub microreset_steps: Option<[u64; 6]>,
}

/// Result of the worst-case padding calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorstCase {
    pub worst_case_cycles: u64,
    /// Worst case rounded up to the next multiple of 100.
    pub pad: u64,
}

impl Machine {
    /// Kernel-mode memory access: no translation and no arbitration.
    fn kernel_access(&mut self, op: WorkloadOp) -> (u64, usize) {
        let lat = self.config.latencies;
        let s = &mut self.state;
        let a = match op {
            WorkloadOp::Read(a) => s.l1d.access(a, false, DomainId::KERNEL),
            WorkloadOp::Write(a) => s.l1d.access(a, true, DomainId::KERNEL),
            WorkloadOp::FetchAt(pc) => s.l1i.access(pc, false, DomainId::KERNEL),
            WorkloadOp::CondBranch(..) | WorkloadOp::IndirectJump(..) => return (lat.t_hit, 0),
        };
        if a.hit {
            (lat.t_hit, 0)
        } else if a.victim_dirty_writeback {
            (lat.t_miss + lat.t_wb_per_line, 1)
        } else {
            (lat.t_miss, 0)
        }
    }

    /// Runs kernel-issued operations; returns cycles and dirty writebacks.
    pub fn run_kernel_ops(&mut self, ops: &[WorkloadOp]) -> (u64, usize) {
        let (mut cycles, mut wbs) = (0, 0);
        for &op in ops {
            let (c, w) = self.kernel_access(op);
            cycles += c;
            wbs += w;
        }
        self.state.cycle_counter += cycles;
        (cycles, wbs)
    }

    fn kernel_miss_cost(&mut self, op: WorkloadOp) -> u64 {
        let (c, _) = self.kernel_access(op);
        if c > self.config.latencies.t_hit {
            c
        } else {
            0
        }
    }

    /// Only misses on the working set cost more than the fixed routine cost.
    fn kernel_routine(&mut self) -> [u64; 3] {
        let costs = self.config.kernel_costs;
        let fixed = [costs.clint_reconfig, costs.schedule, costs.thread_switch];
        let data = kernel_data_lines(&self.config);
        let inst = kernel_inst_lines(&self.config);
        let (mut d0, mut i0) = (0, 0);
        let mut out = [0; 3];
        for (p, &(nd, ni)) in PHASE_LINES.iter().enumerate() {
            let mut cycles = fixed[p];
            for &a in &data[d0..d0 + nd] {
                cycles += self.kernel_miss_cost(WorkloadOp::Read(a));
            }
            for &a in &inst[i0..i0 + ni] {
                cycles += self.kernel_miss_cost(WorkloadOp::FetchAt(a));
            }
            d0 += nd;
            i0 += ni;
            self.state.cycle_counter += cycles;
            out[p] = cycles;
        }
        out
    }

    /// Stalls until `pad` cycles after `interrupt_cycle`. A pad of 0 disables
    /// padding.
    pub fn pad_until(&mut self, interrupt_cycle: u64, pad: u64) -> Result<u64, MachineError> {
        if pad == 0 {
            return Ok(0);
        }
        let elapsed = self.state.cycle_counter - interrupt_cycle;
        if elapsed > pad {
            return Err(MachineError::PadExceeded {
                overshoot: elapsed - pad,
            });
        }
        self.state.cycle_counter = interrupt_cycle + pad;
        Ok(pad - elapsed)
    }

    /// Timer interrupt, kernel routine, mitigation, padding, then the switch
    /// to `next`.
    pub fn context_switch(
        &mut self,
        variant: FenceVariant,
        next: DomainId,
    ) -> Result<CsReport, MachineError> {
        variant.validate()?;
        let interrupt = self.state.cycle_counter;
        let breakdown = self.kernel_routine();
        let kernel_cycles = breakdown.iter().sum();

        let (fence_cycles, writebacks, steps) = match variant.kind {
            FenceKind::None => (0, 0, None),
            FenceKind::SwPrime => {
                let ops = sw_prime_ops(&self.config, self.config.sw_prime_rounds);
                let (c, w) = self.run_kernel_ops(&ops);
                (c, w, None)
            }
            _ => {
                let o = self.apply_fence_t(variant)?;
                (o.fence_cycles, o.writebacks, o.steps)
            }
        };

        let pad = self.state.pad_ctrl as u64;
        let stall = self.pad_until(interrupt, pad)?;
        self.state.current_domain = next;
        Ok(CsReport {
            total_cycles: self.state.cycle_counter - interrupt,
            kernel_cycles,
            kernel_breakdown: breakdown,
            fence_cycles,
            writebacks,
            padded: pad > 0,
            stall_cycles: stall,
            microreset_steps: steps,
        })
    }
}

/// Leaves the machine in the most expensive state for the next context
/// switch: every L1D line written by the Trojan (dirty under write-back), the
/// whole L1I refilled with Trojan code so the kernel working set is gone, and
/// the last refill still in flight.
pub fn prepare_worst_case(m: &mut Machine) -> Result<(), MachineError> {
    let t = DomainId::TROJAN;
    m.set_current_domain(t);
    let base = t.region_base();
    let c = *m.config();
    for k in 0..c.l1i.lines() as u64 {
        m.exec_op(WorkloadOp::FetchAt(base + k * c.l1i.line_bytes), t)?;
    }
    for k in 0..c.l1d.lines() as u64 {
        m.exec_op(WorkloadOp::Write(base + k * c.l1d.line_bytes), t)?;
    }
    Ok(())
}

/// Measures the unpadded context-switch latency from the worst-case state.
pub fn measure_worst_case_pad(
    config: &MicroArchConfig,
    variant: FenceVariant,
) -> Result<WorstCase, MachineError> {
    let mut m = Machine::new(*config)?;
    prepare_worst_case(&mut m)?;
    m.set_pad(0);
    let r = m.context_switch(variant, DomainId::SPY)?;
    Ok(WorstCase {
        worst_case_cycles: r.total_cycles,
        pad: r.total_cycles.div_ceil(100) * 100,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hot_kernel_costs_only_the_fixed_routine() {
        let mut m = Machine::new(MicroArchConfig::default()).unwrap();
        m.context_switch(FenceKind::None.into(), DomainId::TROJAN)
            .unwrap();
        let r = m
            .context_switch(FenceKind::None.into(), DomainId::SPY)
            .unwrap();
        assert_eq!(r.total_cycles, 2920);
        assert_eq!(r.kernel_breakdown, [1800, 800, 320]);
        assert_eq!(m.current_domain(), DomainId::SPY);
    }

    #[test]
    fn cold_kernel_pays_a_miss_per_line() {
        let mut m = Machine::new(MicroArchConfig::default()).unwrap();
        let lat = m.config().latencies;
        let r = m
            .context_switch(FenceKind::None.into(), DomainId::TROJAN)
            .unwrap();
        assert_eq!(r.kernel_cycles, 2920 + 96 * lat.t_miss);
    }

    #[test]
    fn pad_arithmetic() {
        let mut m = Machine::new(MicroArchConfig::default()).unwrap();
        assert_eq!(m.pad_until(0, 0), Ok(0));
        m.idle_until(300);
        assert_eq!(m.pad_until(0, 1000), Ok(700));
        assert_eq!(m.cycles(), 1000);
        m.idle_until(1001);
        assert_eq!(
            m.pad_until(0, 1000),
            Err(MachineError::PadExceeded { overshoot: 1 })
        );
    }

    #[test]
    fn write_back_worst_case_is_bracketed() {
        let c = MicroArchConfig::write_back();
        let w = measure_worst_case_pad(&c, FenceKind::Microreset.into()).unwrap();
        let lines = c.l1d.lines() as u64;
        assert!(w.pad >= lines * c.latencies.t_wb_per_line);
        assert!((20_000..=24_000).contains(&w.worst_case_cycles), "{w:?}");
        assert_eq!(w.pad % 100, 0);
        assert!(w.pad >= w.worst_case_cycles && w.pad - w.worst_case_cycles < 100);
    }

    #[test]
    fn write_through_worst_case_has_no_writebacks() {
        let c = MicroArchConfig::write_through();
        let mut m = Machine::new(c).unwrap();
        prepare_worst_case(&mut m).unwrap();
        let r = m
            .context_switch(FenceKind::Microreset.into(), DomainId::SPY)
            .unwrap();
        assert_eq!(r.writebacks, 0);
        assert_eq!(r.total_cycles, 2920 + 96 * 20 + 295);
    }

    #[test]
    fn padded_switch_takes_exactly_the_pad() {
        let c = MicroArchConfig::write_back();
        let w = measure_worst_case_pad(&c, FenceKind::Microreset.into()).unwrap();
        let mut m = Machine::new(c).unwrap();
        m.set_pad(w.pad as u32);
        prepare_worst_case(&mut m).unwrap();
        let r = m
            .context_switch(FenceKind::Microreset.into(), DomainId::SPY)
            .unwrap();
        assert_eq!(r.total_cycles, w.pad);
        assert!(r.padded);
        assert_eq!(
            r.total_cycles,
            r.kernel_cycles + r.fence_cycles + r.stall_cycles
        );
    }

    #[test]
    fn sw_prime_cost_grows_with_rounds() {
        let c = MicroArchConfig::default();
        assert_eq!(sw_prime_ops(&c, 3).len(), 3 * sw_prime_ops(&c, 1).len());
    }
}
