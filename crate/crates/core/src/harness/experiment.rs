//! Runs attack iterations and analyses the resulting samples.
//!
//! Iterations are grouped into fixed blocks of [`BLOCK_LEN`]. Each block
//! starts from a freshly reset machine and keeps its state from one
//! iteration to the next, so the block is the unit of parallel work and the
//! output does not depend on how many workers execute it. The secret of
//! iteration `i` is drawn from ChaCha8 stream `i` seeded with the run seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::config::{ExperimentConfig, PadSetting};
use crate::attacks::{Attack, AttackError, AttackSpec};
use crate::leakage::{
    analyze, bin_times, channel_matrix, BinStrategy, ChannelMatrix, LeakageError, LeakageReport,
    SampleMeta, SampleSet,
};
use crate::machine::{measure_worst_case_pad, Machine, MachineError};

pub const BLOCK_LEN: usize = 500;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExperimentError {
    #[error("iteration {iteration}: context switch exceeded the pad by {overshoot} cycles")]
    PadExceeded { iteration: usize, overshoot: u64 },
    #[error("iteration {iteration}: {source}")]
    Attack {
        iteration: usize,
        source: AttackError,
    },
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Leakage(#[from] LeakageError),
    #[error("worker pool: {0}")]
    Pool(String),
}

pub fn secret_for(seed: u64, iteration: usize, range: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng.gen_range(0..range)
}

/// The pad register value for this run.
pub fn resolve_pad(cfg: &ExperimentConfig) -> Result<u32, ExperimentError> {
    match cfg.pad {
        PadSetting::Cycles(p) => Ok(p),
        PadSetting::Auto => {
            let w = measure_worst_case_pad(&cfg.arch, cfg.mitigation)?;
            u32::try_from(w.pad).map_err(|_| {
                MachineError::InvalidConfig("worst-case pad exceeds 32 bits".into()).into()
            })
        }
    }
}

fn run_block(
    attack: &Attack,
    cfg: &ExperimentConfig,
    start: usize,
    end: usize,
) -> Result<Vec<(u64, u64)>, ExperimentError> {
    let mut m = Machine::new(cfg.arch)?;
    let range = attack.secret_range();
    (start..end)
        .map(|i| {
            let s = secret_for(cfg.seed, i, range);
            match attack.iteration(&mut m, s) {
                Ok(t) => Ok((s, t)),
                Err(AttackError::Machine(MachineError::PadExceeded { overshoot })) => {
                    Err(ExperimentError::PadExceeded {
                        iteration: i,
                        overshoot,
                    })
                }
                Err(source) => Err(ExperimentError::Attack {
                    iteration: i,
                    source,
                }),
            }
        })
        .collect()
}

pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Collects `n_samples` pairs with the pad already resolved.
pub fn collect_samples(cfg: &ExperimentConfig, pad: u32) -> Result<SampleSet, ExperimentError> {
    let spec = AttackSpec {
        kind: cfg.attack,
        mitigation: cfg.mitigation,
        pad,
    };
    let attack = Attack::new(spec, cfg.arch);
    let blocks: Vec<(usize, usize)> = (0..cfg.n_samples)
        .step_by(BLOCK_LEN)
        .map(|s| (s, (s + BLOCK_LEN).min(cfg.n_samples)))
        .collect();
    let results: Vec<_> = blocks
        .par_iter()
        .map(|&(s, e)| run_block(&attack, cfg, s, e))
        .collect();
    let mut pairs = Vec::with_capacity(cfg.n_samples);
    for r in results {
        pairs.extend(r?);
    }
    Ok(SampleSet {
        pairs,
        meta: SampleMeta {
            seed: cfg.seed,
            config_fingerprint: cfg.fingerprint(),
            attack: cfg.attack.to_string(),
            mitigation: cfg.mitigation.kind.to_string(),
        },
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub samples: SampleSet,
    pub matrix: ChannelMatrix,
    pub report: LeakageReport,
    pub pad: u32,
}

pub fn analyze_samples(
    samples: &SampleSet,
    cfg: &ExperimentConfig,
) -> Result<(ChannelMatrix, LeakageReport), ExperimentError> {
    let strategy = cfg
        .bin_width
        .map_or(BinStrategy::Identity, BinStrategy::Width);
    let binned = bin_times(samples, strategy)?;
    Ok((
        channel_matrix(&binned)?,
        analyze(&binned, cfg.trials, cfg.seed)?,
    ))
}

/// Resolves the pad, collects samples on `jobs` workers and analyses them.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<ExperimentOutcome, ExperimentError> {
    with_pool(jobs, || {
        let pad = resolve_pad(cfg)?;
        let samples = collect_samples(cfg, pad)?;
        let (matrix, report) = analyze_samples(&samples, cfg)?;
        Ok(ExperimentOutcome {
            samples,
            matrix,
            report,
            pad,
        })
    })?
}
