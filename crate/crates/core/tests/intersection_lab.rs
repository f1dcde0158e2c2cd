use brwlab_core::brw::{assign_positions, range, BranchingWalk, StepDistribution};
use brwlab_core::experiments::{ExperimentKind, ResultRow};
use brwlab_core::intersection_lab::*;
use brwlab_core::lattice_green::GreenTable;
use brwlab_core::tree_codec::{sample_conditioned_tree, OffspringDistribution};
use brwlab_core::{Dim, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn walk(n: usize, seed: u64) -> BranchingWalk {
    let d = Dim::new(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = sample_conditioned_tree(&OffspringDistribution::geometric(), n, &mut rng).unwrap();
    assign_positions(tree, &StepDistribution::srw(d), &mut rng)
}

fn green() -> std::sync::Arc<GreenTable> {
    GreenTable::shared(Dim::new(3).unwrap()).unwrap()
}

#[test]
fn probes_on_the_range_never_escape() {
    let bw = walk(512, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let report = probe_escape_sup(&bw, &green(), 1e-6, 16, 1000, 500.0, &mut rng).unwrap();
    let set = range(&bw);
    for p in &report.probes {
        assert!(set.contains(p.site));
        assert_eq!(p.escape, 0.0);
        assert_eq!(p.stderr, 0.0);
    }
    assert_eq!(report.max_escape, 0.0);
}

#[test]
fn distant_probes_almost_surely_escape() {
    let bw = walk(256, 3);
    let set = range(&bw);
    let n = bw.len();
    let lambda = 200.0 * set.max_norm() / (n as f64).powf(0.25);
    let r_kill = default_kill_radius(set.max_norm(), lambda, n);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let report = probe_escape_sup(&bw, &green(), lambda, 24, 2000, r_kill, &mut rng).unwrap();
    let mut far = 0;
    for p in &report.probes {
        if p.site.norm() >= 101.0 * set.max_norm() {
            far += 1;
            assert!(p.union_bound > 0.9, "union bound {}", p.union_bound);
            assert!(p.escape > 0.9, "escape {} at {:?}", p.escape, p.site);
        }
    }
    assert!(far >= 5);
}

#[test]
fn estimates_are_probabilities_and_reproducible() {
    let bw = walk(1024, 5);
    let g = green();
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        probe_escape_sup(&bw, &g, 0.3, 12, 2000, 400.0, &mut rng).unwrap()
    };
    let a = run(6);
    assert_eq!(a, run(6));
    assert_eq!(a.probe_count(), 12);
    for p in &a.probes {
        assert!((0.0..=1.0).contains(&p.escape));
    }
    assert!(a.max_escape >= a.mean_escape);
}

#[test]
fn preconditions() {
    let bw = walk(64, 7);
    let g = green();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let max_norm = range(&bw).max_norm();
    assert!(matches!(probe_escape_sup(&bw, &g, 0.0, 4, 10, 500.0, &mut rng), Err(Error::Domain(_))));
    assert!(matches!(probe_escape_sup(&bw, &g, 0.1, 0, 10, 500.0, &mut rng), Err(Error::Domain(_))));
    assert!(matches!(
        probe_escape_sup(&bw, &g, 0.1, 4, 10, max_norm, &mut rng),
        Err(Error::Precondition(_))
    ));
}

fn spec<'a>(
    offspring: &'a OffspringDistribution,
    theta: &'a StepDistribution,
    n_list: &'a [usize],
    lambda_list: &'a [f64],
    replicas: u32,
) -> CurveSpec<'a> {
    CurveSpec {
        offspring,
        theta,
        n_list,
        lambda_list,
        replicas,
        probes: 8,
        reps: 500,
    }
}

#[test]
fn single_cell_grid_gives_one_row_per_replica() {
    let off = OffspringDistribution::geometric();
    let theta = StepDistribution::srw(Dim::new(3).unwrap());
    let s = spec(&off, &theta, &[128], &[0.2], 3);
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let count = intersection_curve(&s, &green(), &mut rng, &mut |r| {
        rows.push(r);
        Ok(())
    })
    .unwrap();
    assert_eq!(count, 3);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.experiment, ExperimentKind::Intersection);
        assert_eq!(r.replica, i as u32);
        assert_eq!(r.lambda, Some(0.2));
        assert!(r.is_finite());
        assert!(r.max_escape.unwrap() >= r.mean_escape.unwrap());
        assert_eq!(ResultRow::from_csv(&r.to_csv()).unwrap(), *r);
    }
}

#[test]
fn rows_before_a_failure_are_delivered() {
    let off = OffspringDistribution::geometric();
    let theta = StepDistribution::srw(Dim::new(3).unwrap());
    let s = spec(&off, &theta, &[64], &[0.2], 5);
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let out = intersection_curve(&s, &green(), &mut rng, &mut |r| {
        if rows.len() == 2 {
            return Err(Error::Domain("disk full".into()));
        }
        rows.push(r);
        Ok(())
    });
    assert!(out.is_err());
    assert_eq!(rows.len(), 2);
}

#[test]
fn empty_grids_are_rejected() {
    let off = OffspringDistribution::geometric();
    let theta = StepDistribution::srw(Dim::new(3).unwrap());
    let s = spec(&off, &theta, &[], &[0.2], 1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    assert!(intersection_curve(&s, &green(), &mut rng, &mut |_| Ok(())).is_err());
}

#[test]
fn closer_probes_escape_less() {
    let off = OffspringDistribution::geometric();
    let theta = StepDistribution::srw(Dim::new(3).unwrap());
    let s = CurveSpec {
        probes: 16,
        reps: 1000,
        ..spec(&off, &theta, &[1024], &[0.05, 0.8], 12)
    };
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    intersection_curve(&s, &green(), &mut rng, &mut |r| {
        rows.push(r);
        Ok(())
    })
    .unwrap();
    let mean = |lambda: f64| {
        let v: Vec<f64> = rows.iter().filter(|r| r.lambda == Some(lambda)).map(|r| r.max_escape.unwrap()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(0.05) < mean(0.8), "{} vs {}", mean(0.05), mean(0.8));
}
