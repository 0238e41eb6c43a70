//! Inputs shared by the dispatch benchmarks.

use regionpager_core::{resolved_workload, ScenarioFile, WorkloadConfig};

pub const SEED: u64 = 0xbe4c;

/// A resolved-fault workload of `faults` accesses.
pub fn workload(faults: usize) -> ScenarioFile {
    resolved_workload(&WorkloadConfig::new(SEED, faults))
}
