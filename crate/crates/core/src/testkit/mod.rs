//! Oracles and instance generators for tests and benchmarks.

mod generators;
mod lemma;
mod oracle;

use std::path::Path;

use crate::error::Result;

pub use generators::{
    grid, hub_cluster, power_law, random, Family, GeneratorSpec, HubClusterSpec, MIN_POWER_LAW_IRREGULARITY,
};
pub use lemma::{verify_penalty_bound, PenaltyBoundReport};
pub use oracle::{brute_force_best_cut, brute_force_min_rebalance_cost, canonicalize, BestCut, MAX_ASSIGNMENTS};

/// Generates the graph of `spec` and writes it in METIS format.
pub fn dump_metis(spec: &GeneratorSpec, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_metis(&spec.generate()?, path)
}

/// Geometric mean of positive values; zeros are replaced by one so that a
/// perfect result does not collapse the mean.
pub fn geometric_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, c), x| (s + x.max(1.0).ln(), c + 1));
    if count == 0 {
        return f64::NAN;
    }
    (sum / count as f64).exp()
}
