//! Flat `key = value` run configuration with `#` comments.

use std::path::PathBuf;

use crate::brw::StepPreset;
use crate::error::{Error, Result};
use crate::lattice::Dim;
use crate::tree_codec::{OffspringDistribution, OffspringPreset};

use super::row::ExperimentKind;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub dim: Dim,
    pub offspring: OffspringPreset,
    pub theta: StepPreset,
    pub n_list: Vec<u64>,
    pub lambda_list: Vec<f64>,
    pub replicas: u32,
    /// Walks per escape estimate (intersection probes).
    pub reps: u64,
    pub probes: usize,
    pub eps: f64,
    /// Walks for cap_mc and cap_farpoint in scaling runs; 0 skips both.
    pub mc_reps: u64,
    /// Outer radius factor of cap_mc.
    pub r_factor: f64,
    /// `|x_far| = farpoint_factor · max_norm`.
    pub farpoint_factor: f64,
    /// Walk-on-spheres samples per theorem1 replica.
    pub newtonian_reps: u64,
    pub seed: u64,
    pub workers: usize,
    pub out_path: Option<PathBuf>,
    /// Fill the wall_seconds column; off by default because it breaks
    /// byte-identical reruns.
    pub timing: bool,
}

pub const KEYS: [&str; 19] = [
    "experiment",
    "dim",
    "offspring",
    "theta",
    "n_list",
    "lambda_list",
    "replicas",
    "reps",
    "probes",
    "eps",
    "mc_reps",
    "r_factor",
    "farpoint_factor",
    "newtonian_reps",
    "seed",
    "workers",
    "out",
    "timing",
    "lambda",
];

fn pow2(ks: &[u32]) -> Vec<u64> {
    ks.iter().map(|k| 1u64 << k).collect()
}

impl ExperimentConfig {
    /// Desk-scale defaults for each experiment.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let mut cfg = Self {
            experiment,
            dim: Dim::new(3).expect("3 is supported"),
            offspring: OffspringPreset::Geometric,
            theta: StepPreset::Srw,
            n_list: pow2(&[10, 12, 14, 16]),
            lambda_list: Vec::new(),
            replicas: 200,
            reps: 10_000,
            probes: 64,
            eps: 0.05,
            mc_reps: 0,
            r_factor: 8.0,
            farpoint_factor: 4.0,
            newtonian_reps: 10_000,
            seed: 0,
            workers: 1,
            out_path: None,
            timing: false,
        };
        match experiment {
            ExperimentKind::Theorem1 => {
                cfg.n_list = pow2(&[16]);
                cfg.replicas = 50;
            }
            ExperimentKind::Intersection => {
                cfg.n_list = pow2(&[14]);
                cfg.lambda_list = vec![0.4, 0.2, 0.1, 0.05];
                cfg.replicas = 50;
            }
            ExperimentKind::Calibrate => {
                cfg.n_list = Vec::new();
                cfg.replicas = 0;
            }
            _ => {}
        }
        cfg
    }

    /// Parse a whole file; its `experiment` key selects the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        for (line_no, line) in lines(text) {
            if let Some((key, _, value, vcol)) = split(line, line_no)? {
                if key == "experiment" {
                    kind = Some(value.parse().map_err(|e: Error| at(line_no, vcol, e))?);
                }
            }
        }
        let kind = kind.ok_or_else(|| Error::Config {
            line: 1,
            column: 1,
            message: "missing 'experiment' key".into(),
        })?;
        let mut cfg = Self::defaults(kind);
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Overlay the assignments in `text`. An `experiment` key must agree with
    /// the current experiment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (line_no, line) in lines(text) {
            if let Some((key, kcol, value, vcol)) = split(line, line_no)? {
                if !KEYS.contains(&key) {
                    return Err(Error::Config {
                        line: line_no,
                        column: kcol,
                        message: format!("unknown key '{key}'"),
                    });
                }
                self.set(key, value).map_err(|e| at(line_no, vcol, e))?;
            }
        }
        Ok(())
    }

    /// Assign one key. Used for file lines and command-line overrides alike.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "experiment" => {
                let kind: ExperimentKind = value.parse()?;
                if kind != self.experiment {
                    return Err(Error::Domain(format!(
                        "config is for '{kind}' but the run is '{}'",
                        self.experiment
                    )));
                }
            }
            "dim" => self.dim = Dim::new(num(value)?)?,
            "offspring" => self.offspring = OffspringPreset::parse(value)?,
            "theta" => self.theta = StepPreset::parse(value)?,
            "n_list" => self.n_list = list(value, parse_n)?,
            "lambda_list" | "lambda" => {
                self.lambda_list = list(value, |s| {
                    let v: f64 = num(s)?;
                    if v > 0.0 && v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::Domain(format!("λ must be positive, got {s}")))
                    }
                })?
            }
            "replicas" => self.replicas = num(value)?,
            "reps" => self.reps = positive(num(value)?, key)?,
            "probes" => self.probes = positive(num(value)?, key)?,
            "eps" => {
                let eps: f64 = num(value)?;
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(Error::Domain(format!("eps must lie in (0, 1), got {value}")));
                }
                self.eps = eps;
            }
            "mc_reps" => self.mc_reps = num(value)?,
            "r_factor" => {
                let f: f64 = num(value)?;
                if !(f >= 4.0 && f.is_finite()) {
                    return Err(Error::Domain(format!("r_factor must be at least 4, got {value}")));
                }
                self.r_factor = f;
            }
            "farpoint_factor" => {
                let f: f64 = num(value)?;
                if !(f >= 2.0 && f.is_finite()) {
                    return Err(Error::Domain(format!("farpoint_factor must be at least 2, got {value}")));
                }
                self.farpoint_factor = f;
            }
            "newtonian_reps" => self.newtonian_reps = positive(num(value)?, key)?,
            "seed" => self.seed = num(value)?,
            "workers" => self.workers = positive(num(value)?, key)?,
            "out" => self.out_path = (!value.is_empty()).then(|| PathBuf::from(value)),
            "timing" => {
                self.timing = match value {
                    "true" | "yes" | "1" => true,
                    "false" | "no" | "0" => false,
                    _ => return Err(Error::Domain(format!("expected true or false, got '{value}'"))),
                }
            }
            _ => return Err(Error::Domain(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Checks that need several keys at once.
    pub fn validate(&self) -> Result<()> {
        let dist = OffspringDistribution::preset(self.offspring);
        for &n in &self.n_list {
            dist.check_admissible(n)?;
        }
        if self.experiment == ExperimentKind::Intersection && self.lambda_list.is_empty() {
            return Err(Error::Domain("intersection runs need lambda_list".into()));
        }
        let mut seen = self.n_list.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.n_list.len() {
            return Err(Error::Domain("n_list has repeated entries".into()));
        }
        Ok(())
    }

    /// Lambdas of the grid; a single `None` for experiments without λ.
    pub fn lambda_grid(&self) -> Vec<Option<f64>> {
        if self.experiment == ExperimentKind::Intersection {
            self.lambda_list.iter().copied().map(Some).collect()
        } else {
            vec![None]
        }
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l))
}

/// `(key, key column, value, value column)` of a non-blank line.
fn split(line: &str, line_no: usize) -> Result<Option<(&str, usize, &str, usize)>> {
    let body = line.split('#').next().unwrap_or("");
    if body.trim().is_empty() {
        return Ok(None);
    }
    let Some(eq) = body.find('=') else {
        let column = body.len() - body.trim_start().len() + 1;
        return Err(Error::Config {
            line: line_no,
            column,
            message: "expected 'key = value'".into(),
        });
    };
    let raw_key = &body[..eq];
    let key = raw_key.trim();
    let kcol = raw_key.len() - raw_key.trim_start().len() + 1;
    if key.is_empty() {
        return Err(Error::Config {
            line: line_no,
            column: kcol,
            message: "empty key".into(),
        });
    }
    let raw_value = &body[eq + 1..];
    let value = raw_value.trim();
    let vcol = eq + 2 + (raw_value.len() - raw_value.trim_start().len());
    Ok(Some((key, kcol, value, vcol)))
}

fn at(line: usize, column: usize, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => Error::Config {
            line,
            column,
            message: other.to_string(),
        },
    }
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Domain(format!("cannot parse '{}' as a number", s.trim())))
}

fn positive<T: PartialOrd + Default>(v: T, key: &str) -> Result<T> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{key} must be positive")))
    }
}

/// Accepts plain integers and powers written `2^k`.
fn parse_n(s: &str) -> Result<u64> {
    let s = s.trim();
    let n = match s.split_once('^') {
        Some((base, exp)) => {
            let base: u64 = num(base)?;
            let exp: u32 = num(exp)?;
            base.checked_pow(exp)
                .ok_or_else(|| Error::Domain(format!("{s} overflows")))?
        }
        None => num(s)?,
    };
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    Ok(n)
}

fn list<T>(value: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(parse).collect()
}
