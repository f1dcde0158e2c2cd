//! Fast invariant battery run before long experiments.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::brw::RangeSet;
use crate::cap_continuum::{cap_newtonian, PointCloud};
use crate::cap_discrete::cap_exact;
use crate::error::Result;
use crate::lattice::{Dim, Site};
use crate::lattice_green::{green_exact, GreenTable};
use crate::stats::chi_square;
use crate::tree_codec::{
    conditioned_law, decode, encode, sample_conditioned_tree, LukasiewiczPath, OffspringDistribution,
};

use super::checks::Check;

pub const CODEC_SAMPLES: usize = 10_000;
pub const CHI_SQUARE_P_MIN: f64 = 1e-3;
const BALL_REPS: u64 = 20_000;

/// Green values, harmonicity, single-site capacity, ball calibration and codec
/// checks for each dimension in `dims`. Errors loading a Green table (for
/// example a corrupted cache) are reported as failed rows.
pub fn calibrate(dims: &[Dim], seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &dim in dims {
        let d = dim.get();
        let table = match GreenTable::shared(dim) {
            Ok(t) => t,
            Err(e) => {
                checks.push(Check::new(format!("green table d={d}"), false, e.to_string()));
                continue;
            }
        };
        let defect = table.harmonicity_defect();
        checks.push(Check::new(
            format!("green harmonicity d={d}"),
            defect <= 10.0 * table.quadrature_tol(),
            format!("max |ΔG + δ_0| = {defect:.2e}"),
        ));
        let g0 = green_exact(d, &vec![0; d])?;
        if d == 3 {
            checks.push(Check::new(
                "green G(0) d=3",
                (1.5163..=1.5165).contains(&g0),
                format!("{g0:.8} in [1.5163, 1.5165]"),
            ));
        }
        let single = RangeSet::from_sites(dim, [Site::ORIGIN]);
        let cap = cap_exact(&single, &table)?.capacity();
        checks.push(Check::new(
            format!("single-site capacity d={d}"),
            (cap - 1.0 / g0).abs() <= 1e-8,
            format!("{cap:.10} vs 1/G(0) = {:.10}", 1.0 / g0),
        ));
    }
    if dims.iter().any(|d| d.get() == 3) {
        let ball = PointCloud::new(Dim::new(3)?, vec![vec![0.0; 3]], 1.0)?;
        let est = cap_newtonian(&ball, 4.0, 40.0, BALL_REPS, &mut rng)?;
        checks.push(Check::new(
            "unit ball capacity d=3",
            (est.value - 2.0 * PI).abs() <= 3.0 * est.stderr,
            format!("{:.4} ± {:.4} vs 2π", est.value, est.stderr),
        ));
    }
    checks.push(round_trip(&mut rng)?);
    checks.push(law_check(&OffspringDistribution::geometric(), 4, &mut rng)?);
    checks.push(law_check(&OffspringDistribution::poisson(), 5, &mut rng)?);
    Ok(checks)
}

fn round_trip(rng: &mut ChaCha8Rng) -> Result<Check> {
    let dist = OffspringDistribution::geometric();
    let mut failures = 0;
    for k in 0..1000 {
        let tree = sample_conditioned_tree(&dist, 1 + k % 200, rng)?;
        if decode(&encode(&tree))? != tree {
            failures += 1;
        }
    }
    Ok(Check::new("codec round trip", failures == 0, format!("{failures} of 1000 failed")))
}

/// Chi-square of sampled conditioned trees against the enumerated law.
pub fn law_check(dist: &OffspringDistribution, n: usize, rng: &mut ChaCha8Rng) -> Result<Check> {
    let law = conditioned_law(dist, n);
    let index: HashMap<&LukasiewiczPath, usize> = law.iter().enumerate().map(|(i, (p, _))| (p, i)).collect();
    let mut counts = vec![0u64; law.len()];
    let mut stray = 0;
    for _ in 0..CODEC_SAMPLES {
        let path = encode(&sample_conditioned_tree(dist, n, rng)?);
        match index.get(&path) {
            Some(&i) => counts[i] += 1,
            None => stray += 1,
        }
    }
    let probs: Vec<f64> = law.iter().map(|(_, p)| *p).collect();
    let test = chi_square(&counts, &probs)?;
    Ok(Check::new(
        format!("conditioned law {} n={n}", dist.name()),
        stray == 0 && test.p_value > CHI_SQUARE_P_MIN,
        format!(
            "χ² = {:.2} on {} dof, p = {:.4}, {stray} off-support",
            test.statistic, test.dof, test.p_value
        ),
    ))
}
