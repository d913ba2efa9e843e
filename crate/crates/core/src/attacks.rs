//! Trojan and spy workloads: prime-and-probe on each component and the
//! context-switch latency channel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::machine::kernel::{sw_prime_ops, KERNEL_SETS};
use crate::machine::{FenceVariant, Machine, MachineError, MicroArchConfig, WorkloadOp};
use crate::uarch::{Addr, DomainId, PAGE_BYTES};

/// Distance between the interrupts that preempt the spy and the Trojan in
/// the context-switch experiment.
pub const TIME_SLICE: u64 = 100_000;
/// Length of the secret-independent part of the Trojan's slice.
pub const CS_FILLER_OPS: usize = 4096;
const JUMP_TARGET_OFFSET: Addr = 0x1000;
const FILLER_PC_OFFSET: Addr = 0x8000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    L1d,
    L1i,
    Dtlb,
    Btb,
    Bht,
    CsLatency,
}

impl AttackKind {
    pub const PRIME_PROBE: [AttackKind; 5] = [
        AttackKind::L1d,
        AttackKind::L1i,
        AttackKind::Dtlb,
        AttackKind::Btb,
        AttackKind::Bht,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::L1d => "l1d",
            AttackKind::L1i => "l1i",
            AttackKind::Dtlb => "dtlb",
            AttackKind::Btb => "btb",
            AttackKind::Bht => "bht",
            AttackKind::CsLatency => "cs_latency",
        }
    }

    /// Whether the software-only defence can reach this component.
    pub fn sw_primeable(self) -> bool {
        matches!(self, AttackKind::L1d | AttackKind::L1i)
    }

    /// Number of encodable units, i.e. the secret range is `[0, N)`.
    pub fn secret_range(self, config: &MicroArchConfig) -> u64 {
        (match self {
            AttackKind::L1d => config.l1d.lines(),
            AttackKind::L1i => config.l1i.lines(),
            AttackKind::Dtlb => config.dtlb_entries,
            AttackKind::Btb => config.btb_entries,
            AttackKind::Bht => config.bht_entries,
            AttackKind::CsLatency => KERNEL_SETS as usize * config.l1d.ways,
        }) as u64
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::PRIME_PROBE
            .into_iter()
            .chain([AttackKind::CsLatency])
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown attack kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub mitigation: FenceVariant,
    /// Value written to the pad register; 0 disables padding.
    pub pad: u32,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum AttackError {
    #[error("secret {secret} outside [0, {range})")]
    SecretOutOfRange { secret: u64, range: u64 },
    #[error(transparent)]
    Machine(#[from] MachineError),
}

/// Spy prime (and probe) sequence, ascending, touching every unit once.
pub fn gen_prime(kind: AttackKind, config: &MicroArchConfig) -> Vec<WorkloadOp> {
    let base = DomainId::SPY.region_base();
    let n = kind.secret_range(config);
    match kind {
        AttackKind::L1d => (0..n)
            .map(|i| WorkloadOp::Read(base + i * config.l1d.line_bytes))
            .collect(),
        AttackKind::L1i => (0..n)
            .map(|i| WorkloadOp::FetchAt(base + i * config.l1i.line_bytes))
            .collect(),
        AttackKind::Dtlb => (0..n)
            .map(|i| WorkloadOp::Read(page_probe_addr(base, i, config)))
            .collect(),
        AttackKind::Btb => (0..n)
            .map(|i| WorkloadOp::IndirectJump(base + i, base + JUMP_TARGET_OFFSET + i))
            .collect(),
        AttackKind::Bht => (0..n)
            .map(|i| WorkloadOp::CondBranch(base + i, true))
            .collect(),
        AttackKind::CsLatency => Vec::new(),
    }
}

/// Reads one line of page `i`. Successive pages also step one cache line so
/// the probe never contends in a single L1D set.
fn page_probe_addr(base: Addr, i: u64, config: &MicroArchConfig) -> Addr {
    base + i * PAGE_BYTES + (KERNEL_SETS + i) * config.l1d.line_bytes
}

/// Trojan encoding of `secret` inside the Trojan's own region.
pub fn gen_trojan(
    kind: AttackKind,
    config: &MicroArchConfig,
    secret: u64,
) -> Result<Vec<WorkloadOp>, AttackError> {
    let range = kind.secret_range(config);
    if secret >= range {
        return Err(AttackError::SecretOutOfRange { secret, range });
    }
    let base = DomainId::TROJAN.region_base();
    // Cache lines start above the kernel's sets so the Trojan's first lines
    // displace spy lines rather than kernel lines.
    let ops = match kind {
        AttackKind::L1d => (0..secret)
            .map(|j| WorkloadOp::Read(base + (KERNEL_SETS + j) * config.l1d.line_bytes))
            .collect(),
        AttackKind::L1i => (0..secret)
            .map(|j| WorkloadOp::FetchAt(base + (KERNEL_SETS + j) * config.l1i.line_bytes))
            .collect(),
        AttackKind::Dtlb => (0..secret)
            .map(|j| {
                WorkloadOp::Read(
                    page_probe_addr(base, j, config)
                        + config.dtlb_entries as u64 * config.l1d.line_bytes,
                )
            })
            .collect(),
        AttackKind::Btb => (0..secret)
            .map(|j| WorkloadOp::IndirectJump(base + j, base + JUMP_TARGET_OFFSET + j))
            .collect(),
        AttackKind::Bht => (0..secret)
            .flat_map(|j| [WorkloadOp::CondBranch(base + j, false); 2])
            .collect(),
        AttackKind::CsLatency => {
            let mut ops =
                vec![WorkloadOp::CondBranch(base + FILLER_PC_OFFSET, true); CS_FILLER_OPS];
            ops.extend((0..secret).map(|j| WorkloadOp::Write(cs_dirty_addr(base, j, config))));
            ops
        }
    };
    Ok(ops)
}

/// Line `j` of the context-switch Trojan: set `j mod 32`, tag `j / 32`, so
/// the 256 lines fit the 32 kernel sets without displacing each other.
fn cs_dirty_addr(base: Addr, j: u64, config: &MicroArchConfig) -> Addr {
    let line = config.l1d.line_bytes;
    base + (j % KERNEL_SETS) * line + (j / KERNEL_SETS) * config.l1d.sets as u64 * line
}

/// Kernel prime traversal of the attacked L1 cache. Empty for components
/// software cannot flush.
pub fn gen_sw_mitigation(
    kind: AttackKind,
    config: &MicroArchConfig,
    rounds: u32,
) -> Vec<WorkloadOp> {
    let ops = sw_prime_ops(config, rounds);
    match kind {
        AttackKind::L1d | AttackKind::CsLatency => ops
            .into_iter()
            .filter(|o| matches!(o, WorkloadOp::Read(_)))
            .collect(),
        AttackKind::L1i => ops
            .into_iter()
            .filter(|o| matches!(o, WorkloadOp::FetchAt(_)))
            .collect(),
        AttackKind::Dtlb | AttackKind::Btb | AttackKind::Bht => Vec::new(),
    }
}

/// Precomputed spy sequence plus the attack description.
#[derive(Debug, Clone)]
pub struct Attack {
    spec: AttackSpec,
    config: MicroArchConfig,
    prime: Vec<WorkloadOp>,
}

impl Attack {
    pub fn new(spec: AttackSpec, config: MicroArchConfig) -> Self {
        Self {
            prime: gen_prime(spec.kind, &config),
            spec,
            config,
        }
    }

    pub fn spec(&self) -> &AttackSpec {
        &self.spec
    }

    pub fn secret_range(&self) -> u64 {
        self.spec.kind.secret_range(&self.config)
    }

    /// One attack iteration; the returned time is what the spy observes.
    pub fn iteration(&self, m: &mut Machine, secret: u64) -> Result<u64, AttackError> {
        let trojan = gen_trojan(self.spec.kind, &self.config, secret)?;
        m.set_pad(self.spec.pad);
        if self.spec.kind == AttackKind::CsLatency {
            cs_iteration(m, self.spec.mitigation, &trojan)
        } else {
            pp_iteration(m, self.spec.mitigation, &self.prime, &trojan)
        }
    }
}

fn pp_iteration(
    m: &mut Machine,
    fence: FenceVariant,
    prime: &[WorkloadOp],
    trojan: &[WorkloadOp],
) -> Result<u64, AttackError> {
    m.set_current_domain(DomainId::SPY);
    m.run_sequence(prime, DomainId::SPY)?;
    m.context_switch(fence, DomainId::TROJAN)?;
    m.run_sequence(trojan, DomainId::TROJAN)?;
    m.context_switch(fence, DomainId::SPY)?;
    Ok(m.run_sequence(prime, DomainId::SPY)?)
}

fn cs_iteration(
    m: &mut Machine,
    fence: FenceVariant,
    trojan: &[WorkloadOp],
) -> Result<u64, AttackError> {
    m.set_current_domain(DomainId::SPY);
    let t0 = m.cycles();
    m.context_switch(fence, DomainId::TROJAN)?;
    m.run_sequence(trojan, DomainId::TROJAN)?;
    m.idle_until(t0 + TIME_SLICE);
    m.context_switch(fence, DomainId::SPY)?;
    Ok(m.cycles() - t0)
}

/// Prime, switch to the Trojan, encode, switch back, probe.
pub fn run_pp_iteration(
    m: &mut Machine,
    spec: &AttackSpec,
    secret: u64,
) -> Result<u64, AttackError> {
    Attack::new(*spec, *m.config()).iteration(m, secret)
}

/// The spy's view of how long it was descheduled while the Trojan dirtied
/// `secret` lines.
pub fn run_cs_iteration(
    m: &mut Machine,
    spec: &AttackSpec,
    secret: u64,
) -> Result<u64, AttackError> {
    let spec = AttackSpec {
        kind: AttackKind::CsLatency,
        ..*spec
    };
    Attack::new(spec, *m.config()).iteration(m, secret)
}
