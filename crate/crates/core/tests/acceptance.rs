//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.
//!
//! The long experiment criteria run on fewer replicas than the full
//! production grid so the suite finishes on a single core; set
//! `BRWLAB_ACCEPTANCE_FULL=1` to use 200 replicas everywhere.

use std::path::Path;
use std::time::Instant;

use brwlab_core::brw::{range, assign_positions, stationarity_witness, RangeSet, StepDistribution};
use brwlab_core::cap_discrete::{cap_exact, cap_farpoint, cap_mc_escape, cap_mc_escape_with_floor};
use brwlab_core::experiments::{law_check, run, Check, ExperimentConfig, ExperimentKind, RunSummary};
use brwlab_core::lattice_green::{g_continuum, green_exact, GreenTable};
use brwlab_core::stats::ks_two_sample;
use brwlab_core::tree_codec::{conditioned_law, decode, encode, sample_conditioned_tree, OffspringDistribution};
use brwlab_core::{Dim, Result, Site};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String)>;

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn full() -> bool {
    std::env::var_os("BRWLAB_ACCEPTANCE_FULL").is_some_and(|v| v != "0")
}

fn checks_pass(summary: &RunSummary, detail: &mut Vec<String>) -> bool {
    for c in &summary.checks {
        detail.push(format!("{}: {}", c.name, c.detail));
    }
    !summary.checks.is_empty() && summary.all_passed()
}

fn a1() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let g0 = green_exact(3, &[0, 0, 0])?;
    let g1 = green_exact(3, &[1, 0, 0])?;
    ok &= (1.5163..=1.5165).contains(&g0);
    ok &= (g1 - (g0 - 1.0)).abs() <= 1e-8;
    notes.push(format!("G(0) = {g0:.9}, G(e1) - G(0) + 1 = {:.1e}", g1 - g0 + 1.0));
    for d in 3..=5 {
        for x in [vec![50, 0, 0, 0, 0], vec![29, 29, 29, 0, 0], vec![25, 25, 25, 25, 0]] {
            let x = &x[..d];
            let norm = x.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
            if norm < 49.0 {
                continue;
            }
            let xf: Vec<f64> = x.iter().map(|&c| c as f64).collect();
            let ratio = green_exact(d, x)? / g_continuum(d, &xf)?;
            let good = (ratio / d as f64 - 1.0).abs() <= 0.02;
            ok &= good;
            notes.push(format!("d={d} |x|={norm:.1}: G/g = {ratio:.4}"));
        }
    }
    Ok((ok, notes.join("; ")))
}

fn a2() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for dim in Dim::all() {
        let green = GreenTable::shared(dim)?;
        let g0 = green_exact(dim.get(), &vec![0; dim.get()])?;
        let single = RangeSet::from_sites(dim, [Site::ORIGIN]);
        let exact = cap_exact(&single, &green)?.capacity();
        // a radius of 1024 keeps the re-entry bias well under one stderr
        let mc = cap_mc_escape_with_floor(&single, &green, 4.0, 1024.0, 1_000_000, &mut rng)?;
        let good = (exact - 1.0 / g0).abs() <= 1e-8 && (mc.value - exact).abs() <= 3.0 * mc.stderr;
        ok &= good;
        notes.push(format!("d={dim}: exact {exact:.6}, mc {:.5} ± {:.5}", mc.value, mc.stderr));
    }
    Ok((ok, notes.join("; ")))
}

fn a3() -> Outcome {
    const RANGES: usize = 20;
    const REPS: u64 = 100_000;
    let mut ok = true;
    let mut notes = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dist = OffspringDistribution::geometric();
    for dim in Dim::all() {
        let green = GreenTable::shared(dim)?;
        let theta = StepDistribution::srw(dim);
        let mut agree = 0;
        let mut sampled = 0;
        while sampled < RANGES {
            let n = rng.random_range(20..=400);
            let set = range(&assign_positions(sample_conditioned_tree(&dist, n, &mut rng)?, &theta, &mut rng));
            if set.count() > 500 {
                continue;
            }
            sampled += 1;
            let exact = cap_exact(&set, &green)?.capacity();
            let mc = cap_mc_escape(&set, &green, 8.0, REPS, &mut rng)?;
            let far = (4.0 * set.max_norm()).ceil().max(1.0) as i32;
            let fp = cap_farpoint(&set, &green, Site::axis(0, far), REPS, &mut rng)?;
            if mc.agrees_with(exact) && fp.agrees_with(exact) {
                agree += 1;
            }
        }
        ok &= agree >= 18;
        notes.push(format!("d={dim}: {agree}/{RANGES}"));
    }
    Ok((ok, notes.join("; ")))
}

fn a4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let geometric = OffspringDistribution::geometric();
    let mut failures = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=300);
        let tree = sample_conditioned_tree(&geometric, n, &mut rng)?;
        if decode(&encode(&tree))? != tree {
            failures += 1;
        }
    }
    let law4 = conditioned_law(&geometric, 4);
    let uniform = law4.len() == 5 && law4.iter().all(|(_, p)| (p - 0.2).abs() < 1e-12);
    let checks: Vec<Check> = vec![
        law_check(&geometric, 4, &mut rng)?,
        law_check(&geometric, 5, &mut rng)?,
        law_check(&OffspringDistribution::poisson(), 5, &mut rng)?,
    ];
    let mut notes = vec![format!("{failures} of 10000 round trips failed"), format!("n=4 law uniform over 5: {uniform}")];
    notes.extend(checks.iter().map(|c| format!("{}: {}", c.name, c.detail)));
    Ok((failures == 0 && uniform && checks.iter().all(|c| c.passed), notes.join("; ")))
}

fn a5() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (d, reduced) in [(3, 48), (4, 16), (5, 12)] {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Scaling);
        cfg.dim = Dim::new(d)?;
        cfg.replicas = if full() { 200 } else { reduced };
        cfg.seed = 5;
        cfg.workers = workers();
        let summary = run(&cfg)?;
        let mut detail = Vec::new();
        ok &= checks_pass(&summary, &mut detail);
        notes.push(format!("d={d} ({} replicas) {}", cfg.replicas, detail.join(", ")));
    }
    Ok((ok, notes.join("; ")))
}

fn a6() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for d in 3..=5 {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Cardinality);
        cfg.dim = Dim::new(d)?;
        if d > 3 {
            cfg.n_list = vec![1 << 12, 1 << 14, 1 << 16];
        }
        cfg.seed = 6;
        cfg.workers = workers();
        let summary = run(&cfg)?;
        let mut detail = Vec::new();
        ok &= checks_pass(&summary, &mut detail);
        notes.push(format!("d={d} {}", detail.join(", ")));
    }
    Ok((ok, notes.join("; ")))
}

fn a7() -> Outcome {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::Theorem1);
    cfg.seed = 7;
    cfg.workers = workers();
    let summary = run(&cfg)?;
    let mut detail = Vec::new();
    let ok = checks_pass(&summary, &mut detail);
    Ok((ok, detail.join("; ")))
}

fn a8() -> Outcome {
    let mut detail = Vec::new();
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::Intersection);
    cfg.seed = 8;
    cfg.workers = workers();
    let trend = run(&cfg)?;
    let mut ok = checks_pass(&trend, &mut detail);
    cfg.n_list = vec![1 << 12, 1 << 16];
    cfg.lambda_list = vec![0.1];
    let growth = run(&cfg)?;
    ok &= checks_pass(&growth, &mut detail);
    Ok((ok, detail.join("; ")))
}

fn a9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let theta = StepDistribution::srw(Dim::new(3)?);
    let (shifted, base) = stationarity_witness(&OffspringDistribution::geometric(), &theta, 200, 100, 2000, &mut rng)?;
    let (stat, p) = ks_two_sample(&shifted, &base)?;
    Ok((p > 1e-3, format!("KS D = {stat:.4}, p = {p:.4}")))
}

fn run_twice(cfg: &mut ExperimentConfig, dir: &Path, tag: &str) -> Result<bool> {
    let mut bytes = Vec::new();
    for i in 0..2 {
        let path = dir.join(format!("{tag}{i}.csv"));
        cfg.out_path = Some(path.clone());
        run(cfg)?;
        bytes.push(std::fs::read(path)?);
    }
    Ok(bytes[0] == bytes[1] && bytes[0].len() > 200)
}

fn a10() -> Outcome {
    let dir = tempfile::tempdir()?;
    let mut notes = Vec::new();
    let mut ok = true;

    let mut card = ExperimentConfig::defaults(ExperimentKind::Cardinality);
    card.replicas = 20;
    card.workers = 2;
    let same = run_twice(&mut card, dir.path(), "card")?;
    notes.push(format!("cardinality {same}"));
    ok &= same;

    let mut scaling = ExperimentConfig::defaults(ExperimentKind::Scaling);
    scaling.n_list = vec![64, 256, 1024];
    scaling.replicas = 4;
    scaling.mc_reps = 2000;
    scaling.workers = 3;
    let same = run_twice(&mut scaling, dir.path(), "scaling")?;
    notes.push(format!("scaling {same}"));
    ok &= same;

    let mut inter = ExperimentConfig::defaults(ExperimentKind::Intersection);
    inter.n_list = vec![256];
    inter.replicas = 3;
    inter.probes = 8;
    inter.reps = 500;
    inter.workers = 2;
    let same = run_twice(&mut inter, dir.path(), "inter")?;
    notes.push(format!("intersection {same}"));
    ok &= same;
    Ok((ok, notes.join(", ")))
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 10] = [
        ("A1", "Green calibration", a1),
        ("A2", "single-site capacity", a2),
        ("A3", "three-way capacity agreement", a3),
        ("A4", "codec exactness", a4),
        ("A5", "capacity scaling exponent", a5),
        ("A6", "range-size laws", a6),
        ("A7", "consistency ratio", a7),
        ("A8", "intersection trend", a8),
        ("A9", "stationarity", a9),
        ("A10", "determinism", a10),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('A')).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        let tag = if passed { "PASS" } else { "FAIL" };
        println!("{tag} {id:<3} {name:<30} [{:.0}s] {detail}", start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
