use brwlab_core::experiments::*;
use brwlab_core::{Dim, Error};

fn rows_with(n_y: &[(u64, f64)]) -> Vec<ResultRow> {
    n_y.iter()
        .enumerate()
        .map(|(i, &(n, y))| {
            let mut r = ResultRow::new(ExperimentKind::Scaling, 3, n, None, i as u32);
            r.cap_exact = Some(y);
            r
        })
        .collect()
}

#[test]
fn synthetic_power_law_fit_is_exact() {
    let rows = rows_with(&[1024, 4096, 16384, 65536].map(|n| (n, (n as f64).powf(0.75))));
    let (slope, intercept, r2) = fit_exponent(&rows, "n", "cap_exact").unwrap();
    assert!((slope - 0.75).abs() < 1e-12);
    assert!(intercept.abs() < 1e-9);
    assert!((r2 - 1.0).abs() < 1e-12);
}

#[test]
fn fit_needs_three_distinct_positive_points() {
    let rows = rows_with(&[(1024, 1.0), (1024, 2.0), (4096, 3.0)]);
    assert!(matches!(fit_exponent(&rows, "n", "cap_exact"), Err(Error::Fit(_))));
    let rows = rows_with(&[(16, 1.0), (64, 0.0), (256, 3.0)]);
    assert!(fit_exponent(&rows, "n", "cap_exact").is_err());
    assert!(fit_exponent(&rows, "n", "not_a_column").is_err());
}

#[test]
fn csv_rows_round_trip() {
    let mut r = ResultRow::new(ExperimentKind::Intersection, 4, 4096, Some(0.1), 7);
    r.range_count = Some(123);
    r.max_escape = Some(0.125);
    r.mean_escape = Some(0.0625);
    r.escape_stderr = Some(1e-3);
    let line = r.to_csv();
    assert_eq!(line, "intersection,4,4096,0.1,7,123,,,,,0.125,,0.0625,0.001");
    assert_eq!(ResultRow::from_csv(&line).unwrap(), r);
    assert_eq!(line.split(',').count(), CSV_HEADER.split(',').count());
    assert!(ResultRow::from_csv("scaling,3").is_err());
    assert!(ResultRow::from_csv("bogus,3,1,,0,,,,,,,,,").is_err());
}

#[test]
fn config_parses_with_comments_and_powers() {
    let text = "# scaling run\nexperiment = scaling\ndim = 4   # four\nn_list = 2^10, 4096,2^14\nreplicas=3\nseed = 42\nworkers = 2\n";
    let cfg = ExperimentConfig::parse(text).unwrap();
    assert_eq!(cfg.experiment, ExperimentKind::Scaling);
    assert_eq!(cfg.dim, Dim::new(4).unwrap());
    assert_eq!(cfg.n_list, vec![1024, 4096, 16384]);
    assert_eq!((cfg.replicas, cfg.seed, cfg.workers), (3, 42, 2));
    cfg.validate().unwrap();
}

fn config_error(text: &str) -> (usize, usize, String) {
    match ExperimentConfig::parse(text) {
        Err(Error::Config { line, column, message }) => (line, column, message),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn config_errors_carry_line_and_column() {
    let (line, column, msg) = config_error("experiment = scaling\n  colour = blue\n");
    assert_eq!((line, column), (2, 3));
    assert!(msg.contains("colour"));
    let (line, column, _) = config_error("experiment = scaling\ndim =  6\n");
    assert_eq!((line, column), (2, 8));
    let (line, column, _) = config_error("experiment = scaling\nreplicas\n");
    assert_eq!((line, column), (2, 1));
    let (line, column, _) = config_error("experiment = scaling\nn_list = 1024, x\n");
    assert_eq!((line, column), (2, 10));
    let (line, _, _) = config_error("dim = 3\n");
    assert_eq!(line, 1);
}

#[test]
fn overrides_and_mismatched_experiment() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::Cardinality);
    cfg.set("seed", "9").unwrap();
    assert_eq!(cfg.seed, 9);
    assert!(cfg.apply_text("experiment = scaling\n").is_err());
    assert!(cfg.set("eps", "1.5").is_err());
    assert!(cfg.set("workers", "0").is_err());
}

#[test]
fn inadmissible_sizes_are_rejected() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::Cardinality);
    cfg.set("offspring", "binary").unwrap();
    assert!(matches!(cfg.validate(), Err(Error::Inadmissible { .. })));
    cfg.set("n_list", "1025, 4097").unwrap();
    cfg.validate().unwrap();
}

fn small(kind: ExperimentKind, out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(kind);
    cfg.n_list = vec![64, 256, 1024];
    cfg.replicas = 3;
    cfg.seed = 5;
    cfg.out_path = Some(out.to_path_buf());
    cfg
}

#[test]
fn zero_replicas_write_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty.csv");
    let mut cfg = small(ExperimentKind::Scaling, &out);
    cfg.replicas = 0;
    let summary = run(&cfg).unwrap();
    assert!(summary.rows.is_empty() && summary.checks.is_empty());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), format!("{CSV_HEADER}\n"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for kind in [ExperimentKind::Scaling, ExperimentKind::Cardinality] {
        let mut cfg = small(kind, &a);
        cfg.mc_reps = 500;
        cfg.workers = 2;
        run(&cfg).unwrap();
        cfg.out_path = Some(b.clone());
        run(&cfg).unwrap();
        let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(x, y);
        assert_eq!(x.iter().filter(|&&c| c == b'\n').count(), 1 + 9);
        std::fs::remove_file(&a).unwrap();
        std::fs::remove_file(&b).unwrap();
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let mut cfg = small(ExperimentKind::Cardinality, &a);
    cfg.workers = 1;
    run(&cfg).unwrap();
    cfg.workers = 3;
    cfg.out_path = Some(b.clone());
    run(&cfg).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn resume_skips_completed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let mut cfg = small(ExperimentKind::Scaling, &a);
    cfg.replicas = 1;
    run(&cfg).unwrap();
    cfg.replicas = 3;
    let summary = run(&cfg).unwrap();
    assert_eq!((summary.resumed, summary.computed), (3, 6));
    cfg.out_path = Some(b.clone());
    run(&cfg).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let again = run(&cfg).unwrap();
    assert_eq!((again.resumed, again.computed), (9, 0));
}

#[test]
fn resume_refuses_foreign_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    run(&small(ExperimentKind::Cardinality, &out)).unwrap();
    assert!(run(&small(ExperimentKind::Scaling, &out)).is_err());
    std::fs::write(&out, "not,a,header\n").unwrap();
    assert!(run(&small(ExperimentKind::Cardinality, &out)).is_err());
}

#[test]
fn scaling_rows_are_complete_and_unique() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::Scaling, &dir.path().join("s.csv"));
    cfg.mc_reps = 2000;
    let summary = run(&cfg).unwrap();
    let mut keys: Vec<RowKey> = summary.rows.iter().map(|r| r.key()).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 9);
    for r in &summary.rows {
        assert!(r.is_finite());
        let exact = r.cap_exact.unwrap();
        assert!(exact > 0.0 && exact <= r.range_count.unwrap() as f64);
        assert!(r.cap_mc.is_some() && r.cap_farpoint.is_some());
        assert!(r.wall_seconds.is_none());
    }
    assert_eq!(summary.checks.len(), 1);
    assert_eq!(summary.fits.len(), 2);
}

#[test]
fn timing_fills_wall_seconds() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::Cardinality, &dir.path().join("t.csv"));
    cfg.timing = true;
    let summary = run(&cfg).unwrap();
    assert!(summary.rows.iter().all(|r| r.wall_seconds.is_some_and(|s| s >= 0.0)));
}

#[test]
fn trend_checks_count_inversions() {
    let mut rows = Vec::new();
    for (i, (lambda, vals)) in [(0.4, [0.5, 0.52]), (0.2, [0.3, 0.31]), (0.1, [0.32, 0.33]), (0.05, [0.1, 0.11])]
        .into_iter()
        .enumerate()
    {
        for (k, v) in vals.into_iter().enumerate() {
            let mut r = ResultRow::new(ExperimentKind::Intersection, 3, 4096, Some(lambda), (2 * i + k) as u32);
            r.max_escape = Some(v);
            rows.push(r);
        }
    }
    let (checks, _) = evaluate(ExperimentKind::Intersection, 3, &rows).unwrap();
    assert_eq!(checks.len(), 1);
    // one inversion of 0.02 against a combined stderr of about 0.007: beyond 2σ
    assert!(!checks[0].passed, "{}", checks[0]);
}

#[test]
fn calibration_battery_passes_in_three_dimensions() {
    let checks = calibrate(&[Dim::new(3).unwrap()], 1).unwrap();
    for c in &checks {
        assert!(c.passed, "{c}");
    }
    assert!(checks.len() >= 7);
}
