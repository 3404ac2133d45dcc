//! Shared inputs for the benchmarks.

use howard_core::ModelConfig;

pub fn bench_config(seed: u64) -> ModelConfig {
    ModelConfig::standard(seed)
}
