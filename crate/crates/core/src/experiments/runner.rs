use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::brw::{assign_positions, range, StepDistribution};
use crate::cap_continuum::theorem1_check;
use crate::cap_discrete::{cap_exact, cap_farpoint, cap_mc_escape};
use crate::error::{Error, Result};
use crate::intersection_lab::{intersection_replica, CurveSpec};
use crate::lattice::Site;
use crate::lattice_green::GreenTable;
use crate::stats::LineFit;
use crate::tree_codec::{sample_conditioned_tree, OffspringDistribution};

use super::calibrate::calibrate;
use super::checks::{evaluate, Check};
use super::config::ExperimentConfig;
use super::row::{ExperimentKind, ResultRow, RowKey, CSV_HEADER};
use super::seed::replica_seed;

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    /// Every row of the output, in grid order.
    pub rows: Vec<ResultRow>,
    pub computed: usize,
    /// Rows found in an existing output file and kept.
    pub resumed: usize,
    pub checks: Vec<Check>,
    pub fits: Vec<(String, LineFit)>,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn report(&self) -> String {
        let mut out = format!(
            "{} rows ({} computed, {} resumed)\n",
            self.rows.len(),
            self.computed,
            self.resumed
        );
        for (name, fit) in &self.fits {
            out += &format!(
                "fit {name}: slope {:.4} ± {:.4}, intercept {:.4}, r² {:.4}\n",
                fit.slope, fit.slope_stderr, fit.intercept, fit.r_squared
            );
        }
        for c in &self.checks {
            out += &format!("{c}\n");
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Unit {
    n: u64,
    lambda: Option<f64>,
    replica: u32,
}

/// Run an experiment: compute missing rows, write the CSV atomically after
/// every batch, then evaluate the checks on all rows.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    if cfg.experiment == ExperimentKind::Calibrate {
        let checks = calibrate(&[cfg.dim], cfg.seed)?;
        return Ok(RunSummary {
            checks,
            ..Default::default()
        });
    }
    let units: Vec<Unit> = cfg
        .n_list
        .iter()
        .flat_map(|&n| {
            cfg.lambda_grid()
                .into_iter()
                .flat_map(move |lambda| (0..cfg.replicas).map(move |replica| Unit { n, lambda, replica }))
        })
        .collect();
    let key = |u: &Unit| ResultRow::new(cfg.experiment, cfg.dim.get(), u.n, u.lambda, u.replica).key();

    let mut done: HashMap<RowKey, ResultRow> = HashMap::new();
    if let Some(path) = cfg.out_path.as_deref().filter(|p| p.exists()) {
        for row in read_csv(path)? {
            if row.experiment != cfg.experiment || row.dim != cfg.dim.get() {
                return Err(Error::Domain(format!(
                    "{} holds {} rows for d = {}; refusing to mix with {} at d = {}",
                    path.display(),
                    row.experiment,
                    row.dim,
                    cfg.experiment,
                    cfg.dim
                )));
            }
            done.insert(row.key(), row);
        }
    }
    let resumed = units.iter().filter(|u| done.contains_key(&key(u))).count();
    let todo: Vec<Unit> = units.iter().copied().filter(|u| !done.contains_key(&key(u))).collect();

    let green = match cfg.experiment {
        ExperimentKind::Cardinality => None,
        _ if todo.is_empty() => None,
        _ => Some(GreenTable::shared(cfg.dim)?),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    let ordered = |done: &HashMap<RowKey, ResultRow>| -> Vec<ResultRow> {
        units.iter().filter_map(|u| done.get(&key(u)).cloned()).collect()
    };

    let mut computed = 0;
    // one batch of `workers` units at a time, each unit on its own worker
    for batch in todo.chunks(cfg.workers) {
        let results: Vec<Result<ResultRow>> =
            pool.install(|| batch.par_iter().map(|u| compute(cfg, green.as_deref(), u)).collect());
        let mut failure = None;
        for r in results {
            match r {
                Ok(row) => {
                    done.insert(row.key(), row);
                    computed += 1;
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        if let Some(path) = &cfg.out_path {
            write_csv_atomic(path, &ordered(&done))?;
        }
        if let Some(e) = failure {
            return Err(e);
        }
    }
    let rows = ordered(&done);
    if let Some(path) = &cfg.out_path {
        write_csv_atomic(path, &rows)?;
    }
    let (checks, fits) = evaluate(cfg.experiment, cfg.dim.get(), &rows)?;
    Ok(RunSummary {
        rows,
        computed,
        resumed,
        checks,
        fits,
    })
}

fn compute(cfg: &ExperimentConfig, green: Option<&GreenTable>, u: &Unit) -> Result<ResultRow> {
    let start = Instant::now();
    let seed = replica_seed(cfg.seed, cfg.experiment, u.n, u.lambda, u.replica);
    let offspring = OffspringDistribution::preset(cfg.offspring);
    let theta = StepDistribution::preset(cfg.theta, cfg.dim);
    let need_green = || green.ok_or_else(|| Error::Domain("Green table not loaded".into()));
    let mut row = if cfg.experiment == ExperimentKind::Intersection {
        let lambda = u.lambda.expect("intersection units carry λ");
        let spec = CurveSpec {
            offspring: &offspring,
            theta: &theta,
            n_list: &[],
            lambda_list: &[],
            replicas: cfg.replicas,
            probes: cfg.probes,
            reps: cfg.reps,
        };
        intersection_replica(&spec, need_green()?, u.n as usize, lambda, u.replica, seed)?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = sample_conditioned_tree(&offspring, u.n as usize, &mut rng)?;
        let bw = assign_positions(tree, &theta, &mut rng);
        let mut row = ResultRow::new(cfg.experiment, cfg.dim.get(), u.n, u.lambda, u.replica);
        match cfg.experiment {
            ExperimentKind::Scaling => {
                let green = need_green()?;
                let set = range(&bw);
                row.range_count = Some(set.count() as u64);
                row.cap_exact = Some(cap_exact(&set, green)?.capacity());
                if cfg.mc_reps > 0 {
                    row.cap_mc = Some(cap_mc_escape(&set, green, cfg.r_factor, cfg.mc_reps, &mut rng)?.value);
                    let far = (cfg.farpoint_factor * set.max_norm()).ceil().max(1.0) as i32;
                    row.cap_farpoint =
                        Some(cap_farpoint(&set, green, Site::axis(0, far), cfg.mc_reps, &mut rng)?.value);
                }
            }
            ExperimentKind::Cardinality => {
                row.range_count = Some(range(&bw).count() as u64);
            }
            ExperimentKind::Theorem1 => {
                let check = theorem1_check(&bw, need_green()?, cfg.eps, None, cfg.newtonian_reps, &mut rng)?;
                row.range_count = Some(check.range_count as u64);
                row.cap_exact = Some(check.cap_exact);
                row.cap_continuum = Some(check.newtonian.value);
            }
            ExperimentKind::Intersection | ExperimentKind::Calibrate => unreachable!("handled above"),
        }
        row
    };
    if cfg.timing {
        row.wall_seconds = Some(start.elapsed().as_secs_f64());
    }
    if !row.is_finite() {
        return Err(Error::Domain(format!("non-finite value in row {:?}", row.key())));
    }
    Ok(row)
}

/// Parse a results file, checking the header.
pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != CSV_HEADER {
        return Err(Error::Domain(format!("{}: unexpected CSV header '{header}'", path.display())));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = ResultRow::from_csv(&line)
            .map_err(|e| Error::Domain(format!("{} line {}: {e}", path.display(), i + 2)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_csv_atomic(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text += CSV_HEADER;
    text.push('\n');
    for r in rows {
        text += &r.to_csv();
        text.push('\n');
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Domain(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
