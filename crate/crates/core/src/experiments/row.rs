//! One CSV row per (experiment, n, lambda, replica).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    Scaling,
    Cardinality,
    Theorem1,
    Intersection,
    Calibrate,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Scaling,
        ExperimentKind::Cardinality,
        ExperimentKind::Theorem1,
        ExperimentKind::Intersection,
        ExperimentKind::Calibrate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::Cardinality => "cardinality",
            ExperimentKind::Theorem1 => "theorem1",
            ExperimentKind::Intersection => "intersection",
            ExperimentKind::Calibrate => "calibrate",
        }
    }

    /// Stable small integer mixed into replica seeds.
    pub fn id(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown experiment '{s}'")))
    }
}

pub const CSV_HEADER: &str = "experiment,dim,n,lambda,replica,range_count,cap_exact,cap_mc,cap_farpoint,cap_continuum,max_escape,wall_seconds,mean_escape,escape_stderr";

/// Unused fields are `None` and written as empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: ExperimentKind,
    pub dim: usize,
    pub n: u64,
    pub lambda: Option<f64>,
    pub replica: u32,
    pub range_count: Option<u64>,
    pub cap_exact: Option<f64>,
    pub cap_mc: Option<f64>,
    pub cap_farpoint: Option<f64>,
    pub cap_continuum: Option<f64>,
    pub max_escape: Option<f64>,
    pub wall_seconds: Option<f64>,
    pub mean_escape: Option<f64>,
    pub escape_stderr: Option<f64>,
}

/// Identifies a row for resumption and uniqueness checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey {
    pub experiment: ExperimentKind,
    pub n: u64,
    /// `f64::to_bits` of lambda, or `u64::MAX` when absent.
    pub lambda_bits: u64,
    pub replica: u32,
}

impl ResultRow {
    pub fn new(experiment: ExperimentKind, dim: usize, n: u64, lambda: Option<f64>, replica: u32) -> Self {
        Self {
            experiment,
            dim,
            n,
            lambda,
            replica,
            range_count: None,
            cap_exact: None,
            cap_mc: None,
            cap_farpoint: None,
            cap_continuum: None,
            max_escape: None,
            wall_seconds: None,
            mean_escape: None,
            escape_stderr: None,
        }
    }

    pub fn key(&self) -> RowKey {
        RowKey {
            experiment: self.experiment,
            n: self.n,
            lambda_bits: self.lambda.map_or(u64::MAX, f64::to_bits),
            replica: self.replica,
        }
    }

    fn numeric(&self) -> [Option<f64>; 8] {
        [
            self.cap_exact,
            self.cap_mc,
            self.cap_farpoint,
            self.cap_continuum,
            self.max_escape,
            self.wall_seconds,
            self.mean_escape,
            self.escape_stderr,
        ]
    }

    const NUMERIC: [&'static str; 12] = [
        "dim",
        "n",
        "lambda",
        "range_count",
        "cap_exact",
        "cap_mc",
        "cap_farpoint",
        "cap_continuum",
        "max_escape",
        "wall_seconds",
        "mean_escape",
        "escape_stderr",
    ];

    pub fn is_numeric_field(name: &str) -> bool {
        Self::NUMERIC.contains(&name)
    }

    /// Value of a numeric column by header name.
    pub fn field(&self, name: &str) -> Option<f64> {
        match name {
            "dim" => Some(self.dim as f64),
            "n" => Some(self.n as f64),
            "lambda" => self.lambda,
            "range_count" => self.range_count.map(|c| c as f64),
            "cap_exact" => self.cap_exact,
            "cap_mc" => self.cap_mc,
            "cap_farpoint" => self.cap_farpoint,
            "cap_continuum" => self.cap_continuum,
            "max_escape" => self.max_escape,
            "wall_seconds" => self.wall_seconds,
            "mean_escape" => self.mean_escape,
            "escape_stderr" => self.escape_stderr,
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lambda.is_none_or(f64::is_finite) && self.numeric().iter().flatten().all(|v| v.is_finite())
    }

    pub fn to_csv(&self) -> String {
        fn opt<T: fmt::Display>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.dim,
            self.n,
            opt(self.lambda),
            self.replica,
            opt(self.range_count),
            opt(self.cap_exact),
            opt(self.cap_mc),
            opt(self.cap_farpoint),
            opt(self.cap_continuum),
            opt(self.max_escape),
            opt(self.wall_seconds),
            opt(self.mean_escape),
            opt(self.escape_stderr),
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let cells: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
        let width = CSV_HEADER.split(',').count();
        if cells.len() != width {
            return Err(Error::Domain(format!("row has {} fields, expected {width}", cells.len())));
        }
        fn req<T: FromStr>(cell: &str, name: &str) -> Result<T> {
            cell.parse()
                .map_err(|_| Error::Domain(format!("bad value '{cell}' in column {name}")))
        }
        fn opt<T: FromStr>(cell: &str, name: &str) -> Result<Option<T>> {
            if cell.is_empty() {
                Ok(None)
            } else {
                req(cell, name).map(Some)
            }
        }
        Ok(Self {
            experiment: cells[0].parse()?,
            dim: req(cells[1], "dim")?,
            n: req(cells[2], "n")?,
            lambda: opt(cells[3], "lambda")?,
            replica: req(cells[4], "replica")?,
            range_count: opt(cells[5], "range_count")?,
            cap_exact: opt(cells[6], "cap_exact")?,
            cap_mc: opt(cells[7], "cap_mc")?,
            cap_farpoint: opt(cells[8], "cap_farpoint")?,
            cap_continuum: opt(cells[9], "cap_continuum")?,
            max_escape: opt(cells[10], "max_escape")?,
            wall_seconds: opt(cells[11], "wall_seconds")?,
            mean_escape: opt(cells[12], "mean_escape")?,
            escape_stderr: opt(cells[13], "escape_stderr")?,
        })
    }
}
