//! Cycle-cost execution of domain workloads, the kernel context switch,
//! temporal fences and time padding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod config;
pub mod fence;
pub mod kernel;
pub mod state;

pub use config::{CacheGeometry, KernelCosts, Latencies, MicroArchConfig};
pub use fence::{FenceKind, FenceOutcome, FenceVariant};
pub use kernel::{measure_worst_case_pad, CsReport, WorstCase};
pub use state::MicroState;

use crate::uarch::{
    Addr, DigestSubset, DomainId, RoundRobinArbiter, StateDigest, WritePolicy, PAGE_BYTES,
};
use state::{UNIT_LOAD, UNIT_MMU, UNIT_STORE};

const MAX_PIPELINE_OCCUPANCY: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkloadOp {
    Read(Addr),
    Write(Addr),
    /// `(pc, taken)`
    CondBranch(Addr, bool),
    /// `(pc, target)`
    IndirectJump(Addr, Addr),
    FetchAt(Addr),
}

impl WorkloadOp {
    fn addresses(&self) -> [Option<Addr>; 2] {
        match *self {
            WorkloadOp::Read(a) | WorkloadOp::Write(a) | WorkloadOp::FetchAt(a) => [Some(a), None],
            WorkloadOp::CondBranch(pc, _) => [Some(pc), None],
            WorkloadOp::IndirectJump(pc, target) => [Some(pc), Some(target)],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MachineError {
    #[error("address {addr:#x} lies outside the region of domain {domain}")]
    OutsideRegion { addr: Addr, domain: u8 },
    #[error("domain {requested} issued an operation while domain {running} is running")]
    DomainNotRunning { requested: u8, running: u8 },
    #[error("fence select mask {0:#x} sets reserved bits")]
    InvalidMask(u32),
    #[error("context switch exceeded the pad by {overshoot} cycles")]
    PadExceeded { overshoot: u64 },
    #[error("invalid machine configuration: {0}")]
    InvalidConfig(String),
}

/// A simulated core: configuration, live state and the power-on state that
/// Microreset restores.
#[derive(Debug, Clone)]
pub struct Machine {
    config: MicroArchConfig,
    state: MicroState,
    fresh: MicroState,
}

fn grant(arb: &mut RoundRobinArbiter, unit: usize, pinned: bool) -> u64 {
    if pinned {
        0
    } else {
        arb.grant(unit)
    }
}

fn mix(token: u64, value: u64) -> u64 {
    token.rotate_left(7) ^ value.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

impl Machine {
    pub fn new(config: MicroArchConfig) -> Result<Self, MachineError> {
        config.validate().map_err(MachineError::InvalidConfig)?;
        let fresh = MicroState::reset(&config);
        Ok(Self {
            config,
            state: fresh.clone(),
            fresh,
        })
    }

    pub fn config(&self) -> &MicroArchConfig {
        &self.config
    }

    pub fn state(&self) -> &MicroState {
        &self.state
    }

    /// Direct state access for constructing specific scenarios in tests.
    pub fn state_mut(&mut self) -> &mut MicroState {
        &mut self.state
    }

    pub fn digest(&self, subset: DigestSubset) -> StateDigest {
        self.state.digest(subset)
    }

    pub fn reset_digest(&self, subset: DigestSubset) -> StateDigest {
        self.fresh.digest(subset)
    }

    pub fn cycles(&self) -> u64 {
        self.state.cycle_counter
    }

    /// Lets time pass without executing anything (an idle domain).
    pub fn idle_until(&mut self, cycle: u64) {
        self.state.cycle_counter = self.state.cycle_counter.max(cycle);
    }

    pub fn current_domain(&self) -> DomainId {
        self.state.current_domain
    }

    pub fn set_current_domain(&mut self, domain: DomainId) {
        self.state.current_domain = domain;
    }

    pub fn pad(&self) -> u32 {
        self.state.pad_ctrl
    }

    pub fn set_pad(&mut self, pad: u32) {
        self.state.pad_ctrl = pad;
    }

    fn check(&self, op: &WorkloadOp, domain: DomainId) -> Result<(), MachineError> {
        let running = self.state.current_domain;
        if domain != running {
            return Err(MachineError::DomainNotRunning {
                requested: domain.0,
                running: running.0,
            });
        }
        for addr in op.addresses().into_iter().flatten() {
            if !domain.owns(addr) {
                return Err(MachineError::OutsideRegion {
                    addr,
                    domain: domain.0,
                });
            }
        }
        Ok(())
    }

    pub fn exec_op(&mut self, op: WorkloadOp, domain: DomainId) -> Result<u64, MachineError> {
        self.check(&op, domain)?;
        let lat = self.config.latencies;
        let cost = match op {
            WorkloadOp::Read(addr) => self.data_access(addr, false, domain),
            WorkloadOp::Write(addr) => self.data_access(addr, true, domain),
            WorkloadOp::FetchAt(pc) => {
                let s = &mut self.state;
                s.pc = pc;
                let mut cost = 0;
                if !s.itlb.access(pc / PAGE_BYTES, domain) {
                    cost += lat.t_tlb_miss
                        + grant(&mut s.mem_arbiter, UNIT_MMU, self.config.pin_secondary);
                }
                let a = s.l1i.access(pc, false, domain);
                cost + if a.hit { lat.t_hit } else { lat.t_miss }
            }
            WorkloadOp::CondBranch(pc, taken) => {
                self.state.pc = pc;
                let miss = self.state.bht.access(pc, taken);
                lat.t_hit + if miss { lat.t_mispredict } else { 0 }
            }
            WorkloadOp::IndirectJump(pc, target) => {
                self.state.pc = target;
                let miss = self.state.btb.access(pc, target);
                lat.t_hit + if miss { lat.t_mispredict } else { 0 }
            }
        };
        let s = &mut self.state;
        s.pipeline_occupancy = (s.pipeline_occupancy + 1).min(MAX_PIPELINE_OCCUPANCY);
        s.cycle_counter += cost;
        Ok(cost)
    }

    fn data_access(&mut self, addr: Addr, is_write: bool, domain: DomainId) -> u64 {
        let lat = self.config.latencies;
        let pinned = self.config.pin_secondary;
        let trace = self.config.miss_handler_trace;
        let s = &mut self.state;
        let write_through = s.l1d.policy() == WritePolicy::WriteThrough;
        let line_bytes = s.l1d.line_bytes();

        // A refill still outstanding from before completes now; in the
        // write-through cache it first searches the write buffer.
        if let Some(stale) = s.miss_handler.retire() {
            if write_through {
                s.wbuf.lookup(stale.addr / line_bytes, pinned);
            }
        }

        s.pc = addr;
        s.int_regfile_token = mix(s.int_regfile_token, addr);
        let mut cost = 0;
        if !s.dtlb.access(addr / PAGE_BYTES, domain) {
            cost += lat.t_tlb_miss + grant(&mut s.mem_arbiter, UNIT_MMU, pinned);
        }
        let unit = if is_write { UNIT_STORE } else { UNIT_LOAD };
        cost += grant(&mut s.mem_arbiter, unit, pinned);

        let line = addr / line_bytes;
        if write_through {
            cost += if is_write {
                s.wbuf.store(addr, line, pinned)
            } else {
                s.wbuf.lookup(line, pinned)
            };
        }

        let a = s.l1d.access(addr, is_write, domain);
        if a.hit {
            cost += lat.t_hit;
        } else {
            cost += lat.t_miss;
            if a.victim_dirty_writeback {
                cost += lat.t_wb_per_line;
            }
            if trace {
                s.miss_handler.issue(addr, s.cycle_counter);
            }
        }
        cost
    }

    /// Executes `ops` in order; the sum of their costs.
    pub fn run_sequence(
        &mut self,
        ops: &[WorkloadOp],
        domain: DomainId,
    ) -> Result<u64, MachineError> {
        let mut total = 0;
        for &op in ops {
            total += self.exec_op(op, domain)?;
        }
        Ok(total)
    }
}
