use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::stats::{mean_stderr, ols, LineFit};

use super::row::ResultRow;

/// Mean and standard error of `y` for each distinct `x`, in increasing `x`.
pub fn group_means(
    rows: &[ResultRow],
    x: impl Fn(&ResultRow) -> Option<f64>,
    y: impl Fn(&ResultRow) -> Option<f64>,
) -> Result<Vec<(f64, f64, f64)>> {
    let mut groups: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        if let (Some(xv), Some(yv)) = (x(r), y(r)) {
            groups.entry(xv.to_bits()).or_insert_with(|| (xv, Vec::new())).1.push(yv);
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for (xv, ys) in groups.into_values() {
        let (m, se) = mean_stderr(&ys)?;
        out.push((xv, m, se));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Least squares of `log(mean y per x)` on `log x`.
pub fn fit_exponent_by(
    rows: &[ResultRow],
    x: impl Fn(&ResultRow) -> Option<f64>,
    y: impl Fn(&ResultRow) -> Option<f64>,
) -> Result<LineFit> {
    let means = group_means(rows, x, y)?;
    if means.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 distinct x values, have {}", means.len())));
    }
    if means.iter().any(|&(xv, m, _)| xv <= 0.0 || m <= 0.0) {
        return Err(Error::Fit("log-log fit needs positive x and mean y".into()));
    }
    let lx: Vec<f64> = means.iter().map(|m| m.0.ln()).collect();
    let ly: Vec<f64> = means.iter().map(|m| m.1.ln()).collect();
    ols(&lx, &ly)
}

/// [`fit_exponent_by`] on named columns; returns `(slope, intercept, r²)`.
pub fn fit_exponent(rows: &[ResultRow], x_field: &str, y_field: &str) -> Result<(f64, f64, f64)> {
    for f in [x_field, y_field] {
        if !ResultRow::is_numeric_field(f) {
            return Err(Error::Fit(format!("unknown numeric column '{f}'")));
        }
    }
    let fit = fit_exponent_by(rows, |r| r.field(x_field), |r| r.field(y_field))?;
    Ok((fit.slope, fit.intercept, fit.r_squared))
}
