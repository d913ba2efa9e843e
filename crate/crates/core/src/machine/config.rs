use serde::{Deserialize, Serialize};

use crate::uarch::WritePolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheGeometry {
    pub sets: usize,
    pub ways: usize,
    pub line_bytes: u64,
    pub policy: WritePolicy,
}

impl CacheGeometry {
    pub fn capacity_bytes(&self) -> u64 {
        self.sets as u64 * self.ways as u64 * self.line_bytes
    }

    pub fn lines(&self) -> usize {
        self.sets * self.ways
    }
}

/// Cycle costs of the timing model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Latencies {
    pub t_hit: u64,
    pub t_miss: u64,
    pub t_wb_per_line: u64,
    pub t_mispredict: u64,
    pub t_tlb_miss: u64,
    pub t_pipeline_flush: u64,
    pub t_fence_drain: u64,
    pub t_microreset_assert: u64,
}

impl Default for Latencies {
    fn default() -> Self {
        Self {
            t_hit: 1,
            t_miss: 20,
            t_wb_per_line: 8,
            t_mispredict: 5,
            t_tlb_miss: 40,
            t_pipeline_flush: 6,
            t_fence_drain: 16,
            t_microreset_assert: 16,
        }
    }
}

/// Fixed cost of the kernel's context-switch routine, excluding cache misses
/// on its working set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelCosts {
    pub clint_reconfig: u64,
    pub schedule: u64,
    pub thread_switch: u64,
}

impl KernelCosts {
    pub fn total(&self) -> u64 {
        self.clint_reconfig + self.schedule + self.thread_switch
    }
}

impl Default for KernelCosts {
    fn default() -> Self {
        Self {
            clint_reconfig: 1800,
            schedule: 800,
            thread_switch: 320,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MicroArchConfig {
    pub l1d: CacheGeometry,
    pub l1i: CacheGeometry,
    pub dtlb_entries: usize,
    pub itlb_entries: usize,
    pub bht_entries: usize,
    pub btb_entries: usize,
    pub latencies: Latencies,
    pub kernel_costs: KernelCosts,
    /// Model the data-cache miss handler's outstanding request surviving a
    /// non-draining flush.
    pub miss_handler_trace: bool,
    /// Freeze LFSRs and bypass arbitration delays, leaving only the
    /// first-order hit/miss latencies.
    pub pin_secondary: bool,
    /// Prime traversals per context switch for the software-only defence.
    pub sw_prime_rounds: u32,
}

impl MicroArchConfig {
    /// Default core with the given L1 data-cache write policy. The miss-handler
    /// trace is enabled exactly for the write-through cache.
    pub fn with_policy(policy: WritePolicy) -> Self {
        Self {
            l1d: CacheGeometry {
                sets: 256,
                ways: 8,
                line_bytes: 16,
                policy,
            },
            l1i: CacheGeometry {
                sets: 256,
                ways: 4,
                line_bytes: 16,
                policy: WritePolicy::WriteThrough,
            },
            dtlb_entries: 16,
            itlb_entries: 16,
            bht_entries: 64,
            btb_entries: 16,
            latencies: Latencies::default(),
            kernel_costs: KernelCosts::default(),
            miss_handler_trace: policy == WritePolicy::WriteThrough,
            pin_secondary: false,
            sw_prime_rounds: 1,
        }
    }

    pub fn write_through() -> Self {
        Self::with_policy(WritePolicy::WriteThrough)
    }

    pub fn write_back() -> Self {
        Self::with_policy(WritePolicy::WriteBack)
    }

    pub fn validate(&self) -> Result<(), String> {
        let lat = &self.latencies;
        if lat.t_miss <= lat.t_hit {
            return Err(format!(
                "t_miss ({}) must exceed t_hit ({})",
                lat.t_miss, lat.t_hit
            ));
        }
        for (name, g) in [("l1d", &self.l1d), ("l1i", &self.l1i)] {
            if !(g.sets.is_power_of_two()
                && g.ways.is_power_of_two()
                && g.line_bytes.is_power_of_two())
            {
                return Err(format!("{name} geometry must use powers of two"));
            }
            if g.ways > 256 {
                return Err(format!("{name} has more ways than the LFSR can select"));
            }
        }
        if self.l1i.policy != WritePolicy::WriteThrough {
            return Err("the instruction cache is read-only and must be write_through".into());
        }
        for (name, n) in [
            ("dtlb", self.dtlb_entries),
            ("itlb", self.itlb_entries),
            ("bht", self.bht_entries),
            ("btb", self.btb_entries),
        ] {
            if !n.is_power_of_two() {
                return Err(format!("{name} entry count must be a power of two"));
            }
        }
        if self.sw_prime_rounds == 0 {
            return Err("sw_prime_rounds must be at least 1".into());
        }
        Ok(())
    }
}

impl Default for MicroArchConfig {
    fn default() -> Self {
        Self::write_through()
    }
}
