//! Shared inputs for the benchmarks.

use ehrjoint::{generate, PanelDataset, SimConfig};

/// One simulated dataset of `case` with `n` subjects.
pub fn dataset(case: &str, n: usize, seed: u64) -> PanelDataset {
    let mut cfg = SimConfig::for_case(case).expect("known case");
    cfg.n_subjects = n;
    cfg.seed = seed;
    generate(&cfg).expect("simulation succeeds")
}
