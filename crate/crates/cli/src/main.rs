use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use brwlab_core::brw::{assign_positions, range, rescaled_snake, RangeSet, StepDistribution, StepPreset};
use brwlab_core::cap_discrete::{cap_exact, cap_farpoint, cap_mc_escape, CapEstimate};
use brwlab_core::experiments::{calibrate, run, ExperimentConfig, ExperimentKind};
use brwlab_core::lattice_green::GreenTable;
use brwlab_core::tree_codec::{encode, sample_conditioned_tree, OffspringDistribution, OffspringPreset};
use brwlab_core::{Dim, Error, Result, Site};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Critical branching random walk experiments on Z^d.
#[derive(Parser)]
#[command(name = "brwlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// key = value file; flags given here override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// 3, 4 or 5
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Extra KEY=VALUE overrides, applied last
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the fast invariant battery
    Calibrate(Common),
    /// Capacity of the range against n
    Scaling(Common),
    /// Range size against n
    Cardinality(Common),
    /// Lattice capacity vs Newtonian capacity of the rescaled range
    Theorem1(Common),
    /// Escape probabilities near the range
    Intersection(Common),
    /// Print the Lukasiewicz path of a conditioned tree
    SampleTree(SampleArgs),
    /// Sample a branching walk and export its range or snake
    SampleBrw(BrwArgs),
    /// Capacity of a sampled or saved range
    Cap(CapArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "geometric")]
    offspring: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Export {
    /// binary RNGE range file
    Range,
    /// CSV t,x1..xd of the rescaled snake
    Snake,
}

#[derive(Args)]
struct BrwArgs {
    #[command(flatten)]
    tree: SampleArgs,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value = "srw")]
    theta: String,
    #[arg(long, value_enum, default_value = "range")]
    format: Export,
    /// Output file; the snake CSV goes to stdout without it
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Exact,
    Mc,
    Farpoint,
    All,
}

#[derive(Args)]
struct CapArgs {
    /// Range file written by sample-brw
    #[arg(long, conflicts_with = "n")]
    input: Option<PathBuf>,
    /// Sample a fresh range of this size instead
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, value_enum, default_value = "exact")]
    method: Method,
    #[arg(long, default_value_t = 100_000)]
    reps: u64,
    #[arg(long, default_value_t = 8.0)]
    r_factor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// `Ok(false)` when the run finished but a check failed.
fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Calibrate(c) => {
            let dims = match c.dim {
                Some(d) => vec![Dim::new(d)?],
                None => Dim::all().to_vec(),
            };
            let checks = calibrate(&dims, c.seed.unwrap_or(0))?;
            for check in &checks {
                println!("{check}");
            }
            Ok(checks.iter().all(|c| c.passed))
        }
        Command::Scaling(c) => experiment(ExperimentKind::Scaling, c),
        Command::Cardinality(c) => experiment(ExperimentKind::Cardinality, c),
        Command::Theorem1(c) => experiment(ExperimentKind::Theorem1, c),
        Command::Intersection(c) => experiment(ExperimentKind::Intersection, c),
        Command::SampleTree(a) => {
            let dist = OffspringDistribution::preset(OffspringPreset::parse(&a.offspring)?);
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let tree = sample_conditioned_tree(&dist, a.n, &mut rng)?;
            println!("{}", encode(&tree).to_text());
            Ok(true)
        }
        Command::SampleBrw(a) => sample_brw(a),
        Command::Cap(a) => cap(a),
    }
}

fn experiment(kind: ExperimentKind, c: Common) -> Result<bool> {
    let mut cfg = ExperimentConfig::defaults(kind);
    if let Some(path) = &c.config {
        cfg.apply_text(&fs::read_to_string(path)?)?;
    }
    if let Some(d) = c.dim {
        cfg.dim = Dim::new(d)?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(w) = c.workers {
        cfg.set("workers", &w.to_string())?;
    }
    if let Some(out) = c.out {
        cfg.out_path = Some(out);
    }
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Domain(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v)?;
    }
    let summary = run(&cfg)?;
    if cfg.out_path.is_none() {
        let stdout = io::stdout();
        let mut w = stdout.lock();
        writeln!(w, "{}", brwlab_core::experiments::CSV_HEADER)?;
        for r in &summary.rows {
            writeln!(w, "{}", r.to_csv())?;
        }
    }
    eprint!("{}", summary.report());
    Ok(summary.all_passed())
}

fn sample_brw(a: BrwArgs) -> Result<bool> {
    let dim = Dim::new(a.dim)?;
    let dist = OffspringDistribution::preset(OffspringPreset::parse(&a.tree.offspring)?);
    let theta = StepDistribution::preset(StepPreset::parse(&a.theta)?, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(a.tree.seed);
    let tree = sample_conditioned_tree(&dist, a.tree.n, &mut rng)?;
    let bw = assign_positions(tree, &theta, &mut rng);
    match a.format {
        Export::Range => {
            let out = a
                .out
                .ok_or_else(|| Error::Domain("--out is required for the binary range format".into()))?;
            let set = range(&bw);
            let mut w = BufWriter::new(fs::File::create(&out)?);
            set.write_to(&mut w)?;
            w.flush()?;
            eprintln!("n = {}, #R = {}, max |x| = {:.3}", bw.len(), set.count(), set.max_norm());
        }
        Export::Snake => {
            let csv = rescaled_snake(&bw)?.to_csv();
            match a.out {
                Some(out) => fs::write(out, csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(true)
}

fn cap(a: CapArgs) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let set = match (&a.input, a.n) {
        (Some(path), _) => RangeSet::read_from(&mut BufReader::new(fs::File::open(path)?))?,
        (None, Some(n)) => {
            let dim = Dim::new(a.dim)?;
            let tree = sample_conditioned_tree(&OffspringDistribution::geometric(), n, &mut rng)?;
            range(&assign_positions(tree, &StepDistribution::srw(dim), &mut rng))
        }
        (None, None) => return Err(Error::Domain("give --input or --n".into())),
    };
    let green = GreenTable::shared(set.dim())?;
    println!("{}", CapEstimate::CSV_HEADER);
    if matches!(a.method, Method::Exact | Method::All) {
        println!("{}", CapEstimate::exact(&cap_exact(&set, &green)?).to_csv_row());
    }
    if matches!(a.method, Method::Mc | Method::All) {
        println!("{}", cap_mc_escape(&set, &green, a.r_factor, a.reps, &mut rng)?.to_csv_row());
    }
    if matches!(a.method, Method::Farpoint | Method::All) {
        let far = (4.0 * set.max_norm()).ceil().max(1.0) as i32;
        println!("{}", cap_farpoint(&set, &green, Site::axis(0, far), a.reps, &mut rng)?.to_csv_row());
    }
    Ok(true)
}
