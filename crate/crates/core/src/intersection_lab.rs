//! Probability that a simple random walk started near a branching-walk range
//! never hits it, maximized over random probe points.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::brw::{assign_positions, range, BranchingWalk, RangeSet, StepDistribution};
use crate::cap_discrete::{fresh_seed, kernel_probability, EscapeKernel};
use crate::error::{Error, Result};
use crate::experiments::{replica_seed, ExperimentKind, ResultRow};
use crate::lattice::{Site, MAX_DIM};
use crate::lattice_green::GreenTable;
use crate::tree_codec::{sample_conditioned_tree, OffspringDistribution};

/// Smallest kill radius used by [`default_kill_radius`].
pub const KILL_FLOOR: f64 = 64.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub site: Site,
    pub escape: f64,
    pub stderr: f64,
    /// `1 - Σ_{y∈R} G(x-y)/G(0)`, a lower bound on the escape probability.
    pub union_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub n: usize,
    pub lambda: f64,
    pub probes: Vec<Probe>,
    /// Largest probe estimate; a lower bound of the supremum over the neighborhood.
    pub max_escape: f64,
    pub mean_escape: f64,
    /// Standard error of the probe attaining `max_escape`.
    pub max_stderr: f64,
}

impl ProbeReport {
    pub fn probe_count(&self) -> usize {
        self.probes.len()
    }
}

/// `max(KILL_FLOOR, 8 (max_norm + λ n^{1/4}))`.
pub fn default_kill_radius(max_norm: f64, lambda: f64, n: usize) -> f64 {
    KILL_FLOOR.max(8.0 * (max_norm + lambda * (n as f64).powf(0.25)))
}

/// Draws `probe_count` points within `λ n^{1/4}` of the range and estimates the
/// escape probability from each with `mc_reps` walks killed at `r_kill`.
///
/// A probe is a uniform range site plus an offset with uniform direction and
/// radius uniform in `(0, λ n^{1/4})`, rounded to the lattice. Probes landing
/// in the range are redrawn with probability 1/2.
pub fn probe_escape_sup<R: RngCore + ?Sized>(
    bw: &BranchingWalk,
    green: &GreenTable,
    lambda: f64,
    probe_count: usize,
    mc_reps: u64,
    r_kill: f64,
    rng: &mut R,
) -> Result<ProbeReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("λ must be positive, got {lambda}")));
    }
    if probe_count == 0 {
        return Err(Error::Domain("need at least one probe".into()));
    }
    if mc_reps == 0 {
        return Err(Error::Domain("reps must be positive".into()));
    }
    if green.dim() != bw.dim() {
        return Err(Error::Domain("Green table and walk differ in dimension".into()));
    }
    let set = range(bw);
    let n = bw.len();
    let reach = lambda * (n as f64).powf(0.25);
    if !(r_kill > set.max_norm() + reach) {
        return Err(Error::Precondition(format!(
            "kill radius {r_kill} must exceed max_norm + λn^(1/4) = {}",
            set.max_norm() + reach
        )));
    }
    let sites: Vec<Site> = (0..probe_count)
        .map(|_| draw_probe(&set, reach, rng))
        .collect();
    let seeds: Vec<u64> = (0..probe_count).map(|_| fresh_seed(rng)).collect();
    let kernel = EscapeKernel::new(&set);
    let probes = sites
        .into_iter()
        .zip(seeds)
        .map(|(site, seed)| {
            let (escape, stderr) = if set.contains(site) {
                (0.0, 0.0)
            } else {
                kernel_probability(&kernel, site, r_kill, mc_reps, seed)
            };
            Probe {
                site,
                escape,
                stderr,
                union_bound: union_bound(&set, green, site),
            }
        })
        .collect();
    Ok(summarize(n, lambda, probes))
}

/// Max and mean in probe order; the first maximal probe supplies the stderr.
pub fn summarize(n: usize, lambda: f64, probes: Vec<Probe>) -> ProbeReport {
    let mut best = 0;
    for (i, p) in probes.iter().enumerate() {
        if p.escape > probes[best].escape {
            best = i;
        }
    }
    let mean_escape = probes.iter().map(|p| p.escape).sum::<f64>() / probes.len() as f64;
    ProbeReport {
        n,
        lambda,
        max_escape: probes[best].escape,
        max_stderr: probes[best].stderr,
        mean_escape,
        probes,
    }
}

fn draw_probe<R: RngCore + ?Sized>(set: &RangeSet, reach: f64, rng: &mut R) -> Site {
    let d = set.dim().get();
    loop {
        let base = set.sites()[rng.random_range(0..set.count())];
        let mut dir = [0.0; MAX_DIM];
        let mut n2: f64 = 0.0;
        for v in dir.iter_mut().take(d) {
            *v = rng.sample(StandardNormal);
            n2 += *v * *v;
        }
        if n2 < 1e-24 {
            continue;
        }
        let rad = rng.random::<f64>() * reach / n2.sqrt();
        let mut c = base.0;
        for a in 0..d {
            c[a] += (rad * dir[a]).round() as i32;
        }
        let x = Site(c);
        if set.contains(x) && rng.random_bool(0.5) {
            continue;
        }
        return x;
    }
}

fn union_bound(set: &RangeSet, green: &GreenTable, x: Site) -> f64 {
    let g0 = green.green(Site::ORIGIN);
    1.0 - set.sites().iter().map(|&y| green.green(x.sub(y))).sum::<f64>() / g0
}

/// Parameters of an intersection sweep.
#[derive(Debug, Clone)]
pub struct CurveSpec<'a> {
    pub offspring: &'a OffspringDistribution,
    pub theta: &'a StepDistribution,
    pub n_list: &'a [usize],
    pub lambda_list: &'a [f64],
    pub replicas: u32,
    pub probes: usize,
    pub reps: u64,
}

/// One row per (n, λ, replica), each from a fresh conditioned tree seeded by
/// [`replica_seed`]. Rows are handed to `sink` as they complete, so a failing
/// replica leaves every earlier row delivered.
pub fn intersection_curve<R: RngCore + ?Sized>(
    spec: &CurveSpec<'_>,
    green: &GreenTable,
    rng: &mut R,
    sink: &mut dyn FnMut(ResultRow) -> Result<()>,
) -> Result<usize> {
    if spec.n_list.is_empty() || spec.lambda_list.is_empty() {
        return Err(Error::Domain("n and λ grids must be nonempty".into()));
    }
    for &n in spec.n_list {
        spec.offspring.check_admissible(n as u64)?;
    }
    let base = fresh_seed(rng);
    let mut emitted = 0;
    for &n in spec.n_list {
        for &lambda in spec.lambda_list {
            for replica in 0..spec.replicas {
                let seed = replica_seed(base, ExperimentKind::Intersection, n as u64, Some(lambda), replica);
                let row = intersection_replica(spec, green, n, lambda, replica, seed)?;
                sink(row)?;
                emitted += 1;
            }
        }
    }
    Ok(emitted)
}

/// A single cell of the sweep, reproducible from `seed` alone.
pub fn intersection_replica(
    spec: &CurveSpec<'_>,
    green: &GreenTable,
    n: usize,
    lambda: f64,
    replica: u32,
    seed: u64,
) -> Result<ResultRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = sample_conditioned_tree(spec.offspring, n, &mut rng)?;
    let bw = assign_positions(tree, spec.theta, &mut rng);
    let max_norm = bw.positions().iter().map(|s| s.norm()).fold(0.0, f64::max);
    let r_kill = default_kill_radius(max_norm, lambda, n);
    let report = probe_escape_sup(&bw, green, lambda, spec.probes, spec.reps, r_kill, &mut rng)?;
    let mut row = ResultRow::new(ExperimentKind::Intersection, bw.dim().get(), n as u64, Some(lambda), replica);
    row.range_count = Some(range(&bw).count() as u64);
    row.max_escape = Some(report.max_escape);
    row.mean_escape = Some(report.mean_escape);
    row.escape_stderr = Some(report.max_stderr);
    Ok(row)
}
