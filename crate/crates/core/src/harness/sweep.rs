//! Capacity table over attacks, mitigations and write policies.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::experiment::{
    analyze_samples, collect_samples, resolve_pad, with_pool, ExperimentError,
};
use crate::attacks::AttackKind;
use crate::leakage::{LeakageReport, Verdict};
use crate::machine::{FenceKind, FenceVariant};
use crate::uarch::WritePolicy;

pub const POLICIES: [WritePolicy; 2] = [WritePolicy::WriteThrough, WritePolicy::WriteBack];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub kind: AttackKind,
    pub mitigation: FenceKind,
    pub policy: WritePolicy,
    /// `None` where the mitigation does not apply.
    pub report: Option<LeakageReport>,
}

/// `base` with the given attack, mitigation and L1D policy. The miss-handler
/// trace follows the policy.
pub fn cell_config(
    base: &ExperimentConfig,
    kind: AttackKind,
    mitigation: FenceKind,
    policy: WritePolicy,
) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.attack = kind;
    cfg.mitigation = FenceVariant::with_mask(mitigation, base.mitigation.select_mask);
    cfg.arch.l1d.policy = policy;
    cfg.arch.miss_handler_trace = policy == WritePolicy::WriteThrough;
    cfg
}

pub fn sweep(base: &ExperimentConfig, jobs: usize) -> Result<Vec<SweepCell>, ExperimentError> {
    let mut cells = Vec::new();
    for kind in AttackKind::PRIME_PROBE {
        for policy in POLICIES {
            for mitigation in FenceKind::ALL {
                cells.push((kind, mitigation, policy));
            }
        }
    }
    with_pool(jobs, || {
        cells
            .par_iter()
            .map(|&(kind, mitigation, policy)| {
                let report = if mitigation == FenceKind::SwPrime && !kind.sw_primeable() {
                    None
                } else {
                    let cfg = cell_config(base, kind, mitigation, policy);
                    let samples = collect_samples(&cfg, resolve_pad(&cfg)?)?;
                    Some(analyze_samples(&samples, &cfg)?.1)
                };
                Ok(SweepCell {
                    kind,
                    mitigation,
                    policy,
                    report,
                })
            })
            .collect()
    })?
}

fn cell_text(r: &Option<LeakageReport>) -> String {
    match r {
        None => "n/a".into(),
        Some(r) => {
            let mark = if r.verdict == Verdict::Channel {
                "*"
            } else {
                ""
            };
            format!("{:.1}/{:.1}{mark}", r.m_mb, r.m0_mb.unwrap_or(0.0))
        }
    }
}

/// Plain-text table, one row per attack and policy, `M/M0` per mitigation;
/// `*` marks a channel.
pub fn sweep_table(cells: &[SweepCell]) -> String {
    let mut out = format!("{:<6} {:<14}", "attack", "policy");
    for k in FenceKind::ALL {
        let _ = write!(out, " {:>18}", k.as_str());
    }
    out.push('\n');
    for row in cells.chunks(FenceKind::ALL.len()) {
        let _ = write!(
            out,
            "{:<6} {:<14}",
            row[0].kind.as_str(),
            row[0].policy.as_str()
        );
        for c in row {
            let _ = write!(out, " {:>18}", cell_text(&c.report));
        }
        out.push('\n');
    }
    out
}

pub fn sweep_csv(cells: &[SweepCell]) -> Vec<u8> {
    let mut out = String::from("attack,policy,mitigation,m_mb,m0_mb,verdict\n");
    for c in cells {
        match &c.report {
            None => {
                let _ = writeln!(
                    out,
                    "{},{},{},n/a,n/a,n/a",
                    c.kind,
                    c.policy.as_str(),
                    c.mitigation
                );
            }
            Some(r) => {
                let m0 = r.m0_mb.map_or("n/a".to_string(), |v| v.to_string());
                let _ = writeln!(
                    out,
                    "{},{},{},{},{m0},{}",
                    c.kind,
                    c.policy.as_str(),
                    c.mitigation,
                    r.m_mb,
                    r.verdict.as_str()
                );
            }
        }
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_config_tracks_policy() {
        let base = ExperimentConfig::default();
        let c = cell_config(
            &base,
            AttackKind::Bht,
            FenceKind::FullFlush,
            WritePolicy::WriteBack,
        );
        assert_eq!(c.arch.l1d.policy, WritePolicy::WriteBack);
        assert!(!c.arch.miss_handler_trace);
        assert_eq!(c.attack, AttackKind::Bht);
        assert_eq!(c.mitigation.kind, FenceKind::FullFlush);
    }

    #[test]
    fn table_marks_not_applicable_cells() {
        let cells: Vec<_> = FenceKind::ALL
            .into_iter()
            .map(|m| SweepCell {
                kind: AttackKind::Btb,
                mitigation: m,
                policy: WritePolicy::WriteBack,
                report: None,
            })
            .collect();
        let t = sweep_table(&cells);
        assert_eq!(t.lines().count(), 2);
        assert_eq!(t.matches("n/a").count(), 5);
        assert_eq!(
            String::from_utf8(sweep_csv(&cells))
                .unwrap()
                .lines()
                .count(),
            6
        );
    }
}
