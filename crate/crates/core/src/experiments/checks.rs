//! Pass/fail thresholds applied to finished runs.

use std::fmt;

use crate::error::Result;
use crate::stats::{mean_stderr, LineFit};

use super::fit::{fit_exponent_by, group_means};
use super::row::{ExperimentKind, ResultRow};

pub const EXPONENT_TOL: f64 = 0.08;
pub const D3_CARDINALITY_SLOPE: (f64, f64) = (0.70, 0.80);
pub const D4_CARDINALITY_SPREAD: f64 = 0.20;
pub const D5_CARDINALITY_SPREAD: f64 = 0.15;
pub const RATIO_WINDOW: (f64, f64) = (0.75, 1.30);
pub const TREND_SIGMAS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {:<34} {}", self.name, self.detail)
    }
}

fn n_of(r: &ResultRow) -> Option<f64> {
    Some(r.n as f64)
}

/// Checks for one experiment's rows, all in the same dimension.
pub fn evaluate(kind: ExperimentKind, dim: usize, rows: &[ResultRow]) -> Result<(Vec<Check>, Vec<(String, LineFit)>)> {
    let mut checks = Vec::new();
    let mut fits = Vec::new();
    if rows.is_empty() {
        return Ok((checks, fits));
    }
    let distinct_n = group_means(rows, n_of, |_| Some(0.0))?.len();
    match kind {
        ExperimentKind::Scaling => {
            if distinct_n >= 3 {
                let fit = fit_exponent_by(rows, n_of, |r| r.cap_exact)?;
                let target = (dim as f64 - 2.0) / 4.0;
                checks.push(Check::new(
                    "capacity exponent",
                    (fit.slope - target).abs() <= EXPONENT_TOL,
                    format!("slope {:.4} ± {:.4}, target {target:.2} ± {EXPONENT_TOL}", fit.slope, fit.slope_stderr),
                ));
                fits.push(("cap_exact vs n".to_string(), fit));
                if let Ok(fit) = fit_exponent_by(rows, n_of, |r| r.range_count.map(|c| c as f64)) {
                    fits.push(("range_count vs n".to_string(), fit));
                }
            }
        }
        ExperimentKind::Cardinality => cardinality(dim, rows, distinct_n, &mut checks, &mut fits)?,
        ExperimentKind::Theorem1 => {
            for (n, _, _) in group_means(rows, n_of, |_| Some(0.0))? {
                let ratios: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.n as f64 == n)
                    .filter_map(|r| consistency_ratio(r, dim))
                    .collect();
                if ratios.is_empty() {
                    continue;
                }
                let (m, se) = mean_stderr(&ratios)?;
                checks.push(Check::new(
                    format!("consistency ratio n={n}"),
                    (RATIO_WINDOW.0..=RATIO_WINDOW.1).contains(&m),
                    format!("mean {m:.4} ± {se:.4} over {} replicas, window [{}, {}]", ratios.len(), RATIO_WINDOW.0, RATIO_WINDOW.1),
                ));
            }
        }
        ExperimentKind::Intersection => intersection(rows, &mut checks)?,
        ExperimentKind::Calibrate => {}
    }
    Ok((checks, fits))
}

/// `n^{-(d-2)/4} cap_exact / ((1/d) cap_continuum)`.
pub fn consistency_ratio(r: &ResultRow, dim: usize) -> Option<f64> {
    let d = dim as f64;
    let lhs = (r.n as f64).powf(-(d - 2.0) / 4.0) * r.cap_exact?;
    let rhs = r.cap_continuum? / d;
    (rhs > 0.0).then(|| lhs / rhs)
}

fn spread(means: &[(f64, f64, f64)]) -> f64 {
    let lo = means.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let hi = means.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
    hi / lo - 1.0
}

fn cardinality(
    dim: usize,
    rows: &[ResultRow],
    distinct_n: usize,
    checks: &mut Vec<Check>,
    fits: &mut Vec<(String, LineFit)>,
) -> Result<()> {
    let count = |r: &ResultRow| r.range_count.map(|c| c as f64);
    if distinct_n >= 3 {
        let fit = fit_exponent_by(rows, n_of, count)?;
        if dim == 3 {
            let (lo, hi) = D3_CARDINALITY_SLOPE;
            checks.push(Check::new(
                "range size exponent",
                (lo..=hi).contains(&fit.slope),
                format!("slope {:.4} ± {:.4}, window [{lo}, {hi}]", fit.slope, fit.slope_stderr),
            ));
        }
        fits.push(("range_count vs n".to_string(), fit));
    }
    if distinct_n >= 2 && dim >= 4 {
        let (name, limit, means) = if dim == 4 {
            let q = |r: &ResultRow| count(r).map(|c| c * (r.n as f64).ln() / r.n as f64);
            ("(log n / n) range size", D4_CARDINALITY_SPREAD, group_means(rows, n_of, q)?)
        } else {
            let q = |r: &ResultRow| count(r).map(|c| c / r.n as f64);
            ("range size / n", D5_CARDINALITY_SPREAD, group_means(rows, n_of, q)?)
        };
        let s = spread(&means);
        let listed: Vec<String> = means.iter().map(|m| format!("{:.4}", m.1)).collect();
        checks.push(Check::new(
            name,
            s < limit,
            format!("spread {:.1}% (limit {:.0}%), means {}", 100.0 * s, 100.0 * limit, listed.join(" ")),
        ));
    }
    Ok(())
}

fn intersection(rows: &[ResultRow], checks: &mut Vec<Check>) -> Result<()> {
    let cell = |n: u64, lambda: f64| -> Result<Option<(f64, f64)>> {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n && r.lambda == Some(lambda))
            .filter_map(|r| r.max_escape)
            .collect();
        if v.is_empty() {
            return Ok(None);
        }
        mean_stderr(&v).map(Some)
    };
    let mut ns: Vec<u64> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut lambdas: Vec<f64> = rows.iter().filter_map(|r| r.lambda).collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    lambdas.dedup();

    // as λ decreases the mean of max_escape should not increase
    if lambdas.len() >= 2 {
        for &n in &ns {
            let mut cells = Vec::new();
            for &l in &lambdas {
                if let Some(c) = cell(n, l)? {
                    cells.push((l, c));
                }
            }
            if cells.len() < 2 {
                continue;
            }
            let mut inversions = 0;
            let mut large = 0;
            for w in cells.windows(2) {
                let ((_, (m_hi, s_hi)), (_, (m_lo, s_lo))) = (w[0], w[1]);
                if m_lo > m_hi {
                    inversions += 1;
                    if m_lo - m_hi > TREND_SIGMAS * (s_hi * s_hi + s_lo * s_lo).sqrt() {
                        large += 1;
                    }
                }
            }
            let listed: Vec<String> = cells.iter().map(|(l, (m, s))| format!("λ={l}: {m:.4}±{s:.4}")).collect();
            checks.push(Check::new(
                format!("monotone in λ n={n}"),
                inversions <= 1 && large == 0,
                format!("{inversions} inversion(s), {large} beyond {TREND_SIGMAS}σ; {}", listed.join(", ")),
            ));
        }
    }
    // at fixed λ the largest n should not exceed the smallest by more than 2σ
    if ns.len() >= 2 {
        let (n_lo, n_hi) = (ns[0], ns[ns.len() - 1]);
        for &l in &lambdas {
            if let (Some((m_lo, s_lo)), Some((m_hi, s_hi))) = (cell(n_lo, l)?, cell(n_hi, l)?) {
                let slack = TREND_SIGMAS * (s_lo * s_lo + s_hi * s_hi).sqrt();
                checks.push(Check::new(
                    format!("nonincreasing in n λ={l}"),
                    m_hi <= m_lo + slack,
                    format!("n={n_hi}: {m_hi:.4}±{s_hi:.4} vs n={n_lo}: {m_lo:.4}±{s_lo:.4}"),
                ));
            }
        }
    }
    Ok(())
}
