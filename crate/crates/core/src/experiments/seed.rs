use crate::lattice::splitmix64;

use super::row::ExperimentKind;

/// Seed of one replica: a splitmix64 chain over the run seed and the row key.
pub fn replica_seed(seed: u64, experiment: ExperimentKind, n: u64, lambda: Option<f64>, replica: u32) -> u64 {
    let lambda_bits = lambda.map_or(u64::MAX, f64::to_bits);
    [experiment.id(), n, lambda_bits, replica as u64]
        .into_iter()
        .fold(splitmix64(seed), |h, v| splitmix64(h ^ v))
}
