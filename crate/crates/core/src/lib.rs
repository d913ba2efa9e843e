//! Deterministic simulator of on-core timing channels, temporal-fence
//! mitigations and their leakage analysis.

pub mod attacks;
pub mod harness;
pub mod leakage;
pub mod machine;
pub mod uarch;
