//! Channel matrices, plug-in mutual information and the shuffle-based
//! zero-leakage bound.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TRIALS: usize = 1000;
pub const CONFIDENCE: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LeakageError {
    #[error("sample set is empty")]
    EmptySamples,
    #[error("the zero-leakage bound needs at least one trial")]
    InvalidTrials,
    #[error("bin width must be at least 1")]
    InvalidBinWidth,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub config_fingerprint: String,
    pub attack: String,
    pub mitigation: String,
}

/// `(secret, time)` pairs in iteration order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub pairs: Vec<(u64, u64)>,
    pub meta: SampleMeta,
}

impl SampleSet {
    pub fn new(pairs: Vec<(u64, u64)>) -> Self {
        Self {
            pairs,
            meta: SampleMeta::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BinStrategy {
    #[default]
    Identity,
    Width(u64),
}

pub fn bin_times(samples: &SampleSet, strategy: BinStrategy) -> Result<SampleSet, LeakageError> {
    match strategy {
        BinStrategy::Identity => Ok(samples.clone()),
        BinStrategy::Width(0) => Err(LeakageError::InvalidBinWidth),
        BinStrategy::Width(w) => Ok(SampleSet {
            pairs: samples.pairs.iter().map(|&(s, t)| (s, t / w)).collect(),
            meta: samples.meta.clone(),
        }),
    }
}

/// `p[bin][secret] = p(t | s)`: one row per output bin, one column per
/// observed input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    pub secret_values: Vec<u64>,
    pub time_bins: Vec<u64>,
    pub p: Vec<Vec<f64>>,
}

pub fn channel_matrix(samples: &SampleSet) -> Result<ChannelMatrix, LeakageError> {
    if samples.is_empty() {
        return Err(LeakageError::EmptySamples);
    }
    let (secrets, s_idx) = dense(samples.pairs.iter().map(|p| p.0));
    let (bins, t_idx) = dense(samples.pairs.iter().map(|p| p.1));
    let mut counts = vec![vec![0u64; secrets.len()]; bins.len()];
    let mut per_secret = vec![0u64; secrets.len()];
    for (&s, &t) in s_idx.iter().zip(&t_idx) {
        counts[t][s] += 1;
        per_secret[s] += 1;
    }
    let p = counts
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(&per_secret)
                .map(|(&c, &n)| c as f64 / n as f64)
                .collect()
        })
        .collect();
    Ok(ChannelMatrix {
        secret_values: secrets,
        time_bins: bins,
        p,
    })
}

/// Sorted distinct values and each input's index among them.
fn dense(values: impl Iterator<Item = u64> + Clone) -> (Vec<u64>, Vec<usize>) {
    let mut distinct: Vec<u64> = values.clone().collect();
    distinct.sort_unstable();
    distinct.dedup();
    let idx = values
        .map(|v| distinct.binary_search(&v).unwrap())
        .collect();
    (distinct, idx)
}

/// Secrets and times relabelled to dense indices; marginal counts do not
/// change under shuffling, so they are computed once.
struct Encoded {
    s: Vec<u32>,
    t: Vec<u32>,
    s_count: Vec<u64>,
    t_count: Vec<u64>,
    n_t: u64,
}

impl Encoded {
    fn new(samples: &SampleSet) -> Self {
        let (secrets, s) = dense(samples.pairs.iter().map(|p| p.0));
        let (bins, t) = dense(samples.pairs.iter().map(|p| p.1));
        let mut s_count = vec![0; secrets.len()];
        let mut t_count = vec![0; bins.len()];
        s.iter().for_each(|&i| s_count[i] += 1);
        t.iter().for_each(|&i| t_count[i] += 1);
        Self {
            s: s.into_iter().map(|i| i as u32).collect(),
            t: t.into_iter().map(|i| i as u32).collect(),
            s_count,
            t_count,
            n_t: bins.len() as u64,
        }
    }

    fn mi_bits(&self, t: &[u32]) -> f64 {
        let n = self.s.len() as f64;
        let mut keys: Vec<u64> = self
            .s
            .iter()
            .zip(t)
            .map(|(&s, &t)| s as u64 * self.n_t + t as u64)
            .collect();
        keys.sort_unstable();
        let mut mi = 0.0;
        for run in keys.chunk_by(|a, b| a == b) {
            let c = run.len() as f64;
            let (s, t) = ((run[0] / self.n_t) as usize, (run[0] % self.n_t) as usize);
            let expected = self.s_count[s] as f64 * self.t_count[t] as f64;
            mi += c / n * (c * n / expected).log2();
        }
        mi.max(0.0)
    }
}

/// Plug-in estimate of I(S;T) in millibits.
pub fn mutual_information(samples: &SampleSet) -> Result<f64, LeakageError> {
    if samples.is_empty() {
        return Err(LeakageError::EmptySamples);
    }
    let e = Encoded::new(samples);
    Ok(1000.0 * e.mi_bits(&e.t))
}

/// Mutual information of each shuffled trial, in trial order. Trial `k`
/// permutes the time column with ChaCha8 stream `k` of `seed`.
pub fn shuffled_trials(
    samples: &SampleSet,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>, LeakageError> {
    if samples.is_empty() {
        return Err(LeakageError::EmptySamples);
    }
    if trials == 0 {
        return Err(LeakageError::InvalidTrials);
    }
    let e = Encoded::new(samples);
    Ok((0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut t = e.t.clone();
            t.shuffle(&mut rng);
            1000.0 * e.mi_bits(&t)
        })
        .collect())
}

/// Nearest-rank percentile of `values`.
pub fn nearest_rank(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// 95th percentile of the mutual information over shuffled trials, in
/// millibits. Needs at least two samples.
pub fn zero_leakage_bound(
    samples: &SampleSet,
    trials: usize,
    seed: u64,
) -> Result<f64, LeakageError> {
    let values = shuffled_trials(samples, trials, seed)?;
    Ok(nearest_rank(&values, CONFIDENCE))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Channel,
    ConsistentWithNoChannel,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Channel => "channel",
            Verdict::ConsistentWithNoChannel => "consistent_with_no_channel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub m_mb: f64,
    /// Absent for a single sample, where shuffling is meaningless.
    pub m0_mb: Option<f64>,
    pub n: usize,
    pub trials: usize,
    pub verdict: Verdict,
}

impl LeakageReport {
    pub fn ratio(&self) -> Option<f64> {
        self.m0_mb.map(|m0| self.m_mb / m0)
    }
}

pub fn analyze(
    samples: &SampleSet,
    trials: usize,
    seed: u64,
) -> Result<LeakageReport, LeakageError> {
    let m = mutual_information(samples)?;
    let m0 = if samples.len() >= 2 {
        Some(zero_leakage_bound(samples, trials, seed)?)
    } else {
        None
    };
    let verdict = match m0 {
        Some(m0) if m > m0 => Verdict::Channel,
        _ => Verdict::ConsistentWithNoChannel,
    };
    Ok(LeakageReport {
        m_mb: m,
        m0_mb: m0,
        n: samples.len(),
        trials,
        verdict,
    })
}

fn average_ranks(values: &[u64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| values[i]);
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        order[i..=j].iter().for_each(|&k| ranks[k] = r);
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation between secret and time, ties averaged.
/// `None` when either column is constant.
pub fn spearman(pairs: &[(u64, u64)]) -> Option<f64> {
    let a = average_ranks(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let b = average_ranks(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Observed inputs and, per input, the multiset of outputs.
pub fn outputs_by_secret(samples: &SampleSet) -> BTreeMap<u64, Vec<u64>> {
    let mut m: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for &(s, t) in &samples.pairs {
        m.entry(s).or_default().push(t);
    }
    m
}
