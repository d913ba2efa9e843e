//! Temporal fence variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Machine, MachineError};
use crate::uarch::StateTag;

pub const MASK_L1D: u32 = 1 << 0;
pub const MASK_L1I: u32 = 1 << 1;
pub const MASK_TLB: u32 = 1 << 2;
pub const MASK_PREDICTORS: u32 = 1 << 3;
pub const MASK_SECONDARY: u32 = 1 << 4;
pub const MASK_ALL: u32 = 0x1f;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FenceKind {
    None,
    SwPrime,
    BasicFlush,
    FullFlush,
    Microreset,
}

impl FenceKind {
    pub const ALL: [FenceKind; 5] = [
        FenceKind::None,
        FenceKind::SwPrime,
        FenceKind::BasicFlush,
        FenceKind::FullFlush,
        FenceKind::Microreset,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FenceKind::None => "none",
            FenceKind::SwPrime => "sw_prime",
            FenceKind::BasicFlush => "basic_flush",
            FenceKind::FullFlush => "full_flush",
            FenceKind::Microreset => "microreset",
        }
    }

    pub fn is_hardware_fence(self) -> bool {
        matches!(
            self,
            FenceKind::BasicFlush | FenceKind::FullFlush | FenceKind::Microreset
        )
    }
}

impl fmt::Display for FenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FenceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FenceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown mitigation `{s}`"))
    }
}

/// A mitigation together with its 20-bit component select mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FenceVariant {
    pub kind: FenceKind,
    pub select_mask: u32,
}

impl FenceVariant {
    pub fn new(kind: FenceKind) -> Self {
        Self {
            kind,
            select_mask: MASK_ALL,
        }
    }

    pub fn with_mask(kind: FenceKind, select_mask: u32) -> Self {
        Self { kind, select_mask }
    }

    pub fn validate(&self) -> Result<(), MachineError> {
        if self.select_mask & !MASK_ALL != 0 {
            Err(MachineError::InvalidMask(self.select_mask))
        } else {
            Ok(())
        }
    }
}

impl From<FenceKind> for FenceVariant {
    fn from(kind: FenceKind) -> Self {
        Self::new(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FenceOutcome {
    pub fence_cycles: u64,
    pub writebacks: usize,
    /// Cycles of Microreset steps 1 to 6.
    pub steps: Option<[u64; 6]>,
}

impl Machine {
    /// Executes a hardware fence and advances the cycle counter by its cost.
    /// `None` and `SwPrime` are no-ops here; the software defence is part
    /// of the kernel routine.
    pub fn apply_fence_t(&mut self, variant: FenceVariant) -> Result<FenceOutcome, MachineError> {
        variant.validate()?;
        let outcome = match variant.kind {
            FenceKind::None | FenceKind::SwPrime => FenceOutcome::default(),
            FenceKind::BasicFlush => self.basic_flush(variant.select_mask),
            FenceKind::FullFlush => {
                let mut o = self.basic_flush(variant.select_mask);
                if variant.select_mask & MASK_SECONDARY != 0 {
                    self.reset_secondary();
                    o.fence_cycles += 1;
                }
                o
            }
            FenceKind::Microreset => self.microreset(),
        };
        self.state.cycle_counter += outcome.fence_cycles;
        Ok(outcome)
    }

    fn basic_flush(&mut self, mask: u32) -> FenceOutcome {
        let lat = self.config.latencies;
        let s = &mut self.state;
        s.pipeline_occupancy = 0;
        let mut cycles = lat.t_pipeline_flush;
        let mut writebacks = 0;
        let mut clear = 0;
        if mask & MASK_L1D != 0 {
            writebacks = s.l1d.writeback_all();
            s.wbuf.drain();
            cycles += writebacks as u64 * lat.t_wb_per_line + lat.t_fence_drain;
            clear = clear.max(s.l1d.sets());
        }
        if mask & MASK_L1I != 0 {
            s.l1i.writeback_all();
            clear = clear.max(s.l1i.sets());
        }
        if mask & MASK_TLB != 0 {
            s.dtlb.invalidate();
            s.itlb.invalidate();
            clear = clear.max(s.dtlb.capacity()).max(s.itlb.capacity());
        }
        if mask & MASK_PREDICTORS != 0 {
            s.bht.clear();
            s.btb.clear();
            clear = clear.max(s.bht.len()).max(s.btb.entries().len());
        }
        FenceOutcome {
            fence_cycles: cycles + clear as u64,
            writebacks,
            steps: None,
        }
    }

    fn reset_secondary(&mut self) {
        let trace = self.config.miss_handler_trace;
        let s = &mut self.state;
        s.l1d.reset_lfsr();
        s.l1i.reset_lfsr();
        s.dtlb.reset_plru();
        s.itlb.reset_plru();
        s.mem_arbiter.reset();
        s.wbuf.reset_arbiters();
        if !trace {
            s.miss_handler.in_flight = None;
        }
    }

    fn microreset(&mut self) -> FenceOutcome {
        let lat = self.config.latencies;
        let s = &mut self.state;
        let mut steps = [0u64; 6];

        s.saved_pc = s.pc;
        steps[0] = 1;

        let writebacks = s.l1d.writeback_all();
        steps[1] = writebacks as u64 * lat.t_wb_per_line;

        s.miss_handler.in_flight = None;
        s.wbuf.drain();
        steps[2] = lat.t_fence_drain;

        s.l1i.writeback_all();
        s.dtlb.invalidate();
        s.itlb.invalidate();
        s.bht.clear();
        s.btb.clear();
        steps[3] = [
            s.l1d.sets(),
            s.l1i.sets(),
            s.dtlb.capacity(),
            s.itlb.capacity(),
            s.bht.len(),
            s.btb.entries().len(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0) as u64;

        s.restore_partition(StateTag::NonArchitectural, &self.fresh);
        steps[4] = lat.t_microreset_assert;

        s.pc = s.saved_pc;
        steps[5] = lat.t_pipeline_flush;

        FenceOutcome {
            fence_cycles: steps.iter().sum(),
            writebacks,
            steps: Some(steps),
        }
    }
}
