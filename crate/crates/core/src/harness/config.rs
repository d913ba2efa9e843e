//! Experiment configuration documents.
//!
//! A document is TOML with dotted keys, e.g.
//!
//! ```toml
//! l1d.policy = "write_back"
//! attack.kind = "l1d"
//! attack.mitigation = "microreset"
//! attack.pad = "auto"
//! n_samples = 10000
//! seed = 7
//! m0.trials = 1000
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use crate::attacks::AttackKind;
use crate::machine::fence::MASK_ALL;
use crate::machine::{FenceKind, FenceVariant, MicroArchConfig};
use crate::uarch::WritePolicy;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("key `{key}`: {message}")]
    Schema { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadSetting {
    /// Resolved from the worst-case measurement when the run starts.
    Auto,
    Cycles(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub arch: MicroArchConfig,
    pub attack: AttackKind,
    pub mitigation: FenceVariant,
    pub pad: PadSetting,
    pub n_samples: usize,
    pub seed: u64,
    pub trials: usize,
    pub bin_width: Option<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            arch: MicroArchConfig::default(),
            attack: AttackKind::L1d,
            mitigation: FenceVariant::new(FenceKind::Microreset),
            pad: PadSetting::Auto,
            n_samples: 10_000,
            seed: 0,
            trials: 1000,
            bin_width: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// SHA-256 over everything that shapes the samples except the seed and
    /// where outputs go.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(&(
            &self.arch,
            self.attack,
            self.mitigation,
            self.pad,
            self.n_samples,
            self.trials,
            self.bin_width,
        ))
        .expect("config serializes");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn schema(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Flattens nested tables into `(dotted key, value)` pairs.
fn flatten(prefix: &str, table: Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            v => out.push((key, v)),
        }
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(schema(key, "expected a non-negative integer")),
    }
}

fn as_u32(key: &str, v: &Value) -> Result<u32, ConfigError> {
    u32::try_from(as_u64(key, v)?).map_err(|_| schema(key, "value does not fit in 32 bits"))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str()
        .ok_or_else(|| schema(key, "expected a quoted string"))
}

fn as_bool(key: &str, v: &Value) -> Result<bool, ConfigError> {
    v.as_bool()
        .ok_or_else(|| schema(key, "expected true or false"))
}

fn parse_policy(key: &str, v: &Value) -> Result<WritePolicy, ConfigError> {
    match as_str(key, v)? {
        "write_through" => Ok(WritePolicy::WriteThrough),
        "write_back" => Ok(WritePolicy::WriteBack),
        other => Err(schema(key, format!("unknown policy `{other}`"))),
    }
}

pub fn load_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse {
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
            message: e.message().to_string(),
        })?;
    let mut entries = Vec::new();
    flatten("", table, &mut entries);

    let mut cfg = ExperimentConfig::default();
    let mut policy = WritePolicy::WriteThrough;
    let mut trace = None;
    let mut arch = MicroArchConfig::default();

    for (key, v) in &entries {
        let k = key.as_str();
        match k {
            "l1d.policy" => policy = parse_policy(k, v)?,
            "l1d.sets" => arch.l1d.sets = as_u64(k, v)? as usize,
            "l1d.ways" => arch.l1d.ways = as_u64(k, v)? as usize,
            "l1i.sets" => arch.l1i.sets = as_u64(k, v)? as usize,
            "l1i.ways" => arch.l1i.ways = as_u64(k, v)? as usize,
            "arch.miss_handler_trace" => trace = Some(as_bool(k, v)?),
            "arch.pin_secondary" => arch.pin_secondary = as_bool(k, v)?,
            "arch.sw_prime_rounds" => arch.sw_prime_rounds = as_u32(k, v)?,
            "latencies.t_hit" => arch.latencies.t_hit = as_u64(k, v)?,
            "latencies.t_miss" => arch.latencies.t_miss = as_u64(k, v)?,
            "latencies.t_wb_per_line" => arch.latencies.t_wb_per_line = as_u64(k, v)?,
            "latencies.t_mispredict" => arch.latencies.t_mispredict = as_u64(k, v)?,
            "latencies.t_tlb_miss" => arch.latencies.t_tlb_miss = as_u64(k, v)?,
            "latencies.t_pipeline_flush" => arch.latencies.t_pipeline_flush = as_u64(k, v)?,
            "latencies.t_fence_drain" => arch.latencies.t_fence_drain = as_u64(k, v)?,
            "latencies.t_microreset_assert" => arch.latencies.t_microreset_assert = as_u64(k, v)?,
            "kernel.clint_reconfig" => arch.kernel_costs.clint_reconfig = as_u64(k, v)?,
            "kernel.schedule" => arch.kernel_costs.schedule = as_u64(k, v)?,
            "kernel.thread_switch" => arch.kernel_costs.thread_switch = as_u64(k, v)?,
            "attack.kind" => {
                cfg.attack = as_str(k, v)?.parse().map_err(|e: String| schema(k, e))?
            }
            "attack.mitigation" => {
                cfg.mitigation.kind = as_str(k, v)?.parse().map_err(|e: String| schema(k, e))?
            }
            "attack.select_mask" => {
                let mask = as_u32(k, v)?;
                if mask & !MASK_ALL != 0 {
                    return Err(schema(k, format!("reserved bits set in {mask:#x}")));
                }
                cfg.mitigation.select_mask = mask;
            }
            "attack.pad" => {
                cfg.pad = match v {
                    Value::String(s) if s == "auto" => PadSetting::Auto,
                    Value::String(s) => {
                        return Err(schema(
                            k,
                            format!("expected \"auto\" or an integer, got \"{s}\""),
                        ))
                    }
                    v => PadSetting::Cycles(as_u32(k, v)?),
                }
            }
            "n_samples" => {
                cfg.n_samples = as_u64(k, v)? as usize;
                if cfg.n_samples == 0 {
                    return Err(schema(k, "must be at least 1"));
                }
            }
            "seed" => cfg.seed = as_u64(k, v)?,
            "m0.trials" => {
                cfg.trials = as_u64(k, v)? as usize;
                if cfg.trials == 0 {
                    return Err(schema(k, "must be at least 1"));
                }
            }
            "m0.bin_width" => {
                let w = as_u64(k, v)?;
                if w == 0 {
                    return Err(schema(k, "must be at least 1"));
                }
                cfg.bin_width = Some(w);
            }
            "output_dir" => cfg.output_dir = PathBuf::from(as_str(k, v)?),
            _ => return Err(schema(k, "unknown key")),
        }
    }

    arch.l1d.policy = policy;
    arch.miss_handler_trace = trace.unwrap_or(policy == WritePolicy::WriteThrough);
    arch.validate().map_err(|m| schema("arch", m))?;
    cfg.arch = arch;
    Ok(cfg)
}
