//! Discrete capacity of finite lattice sets: exact Green solve, escape Monte
//! Carlo, and far-point hitting normalization.

mod cube_exit;
mod exact;
mod simd;
mod walk;

use std::fmt;

use rand::RngCore;

use crate::brw::RangeSet;
use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::lattice_green::GreenTable;

pub use exact::{cap_exact, cap_exact_with, EquilibriumVector, SolverOptions, CG_TOL};
pub use cube_exit::{CubeExitLaw, CubeExitTables};
pub use walk::EscapeKernel;

pub(crate) use walk::{count_successes, fresh_seed};

/// Smallest outer radius used by [`cap_mc_escape`].
pub const DEFAULT_RADIUS_FLOOR: f64 = 64.0;
/// Kill radius of [`cap_farpoint`] in units of `|x_far|`.
pub const FARPOINT_KILL_FACTOR: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapMethod {
    Exact,
    McEscape,
    FarPoint,
}

impl CapMethod {
    pub fn name(self) -> &'static str {
        match self {
            CapMethod::Exact => "exact",
            CapMethod::McEscape => "mc_escape",
            CapMethod::FarPoint => "far_point",
        }
    }
}

impl fmt::Display for CapMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapEstimate {
    pub value: f64,
    pub stderr: f64,
    pub reps: u64,
    pub method: CapMethod,
    pub bias_bound: Option<f64>,
}

impl CapEstimate {
    pub const CSV_HEADER: &'static str = "method,value,stderr,reps,bias_bound";

    pub fn exact(eq: &EquilibriumVector) -> Self {
        Self {
            value: eq.capacity(),
            stderr: 0.0,
            reps: 0,
            method: CapMethod::Exact,
            bias_bound: None,
        }
    }

    /// `|value - reference| <= 3 stderr + bias_bound`.
    pub fn agrees_with(&self, reference: f64) -> bool {
        (self.value - reference).abs() <= 3.0 * self.stderr + self.bias_bound.unwrap_or(0.0)
    }

    pub fn to_csv_row(&self) -> String {
        let bias = self.bias_bound.map(|b| format!("{b}")).unwrap_or_default();
        format!("{},{},{},{},{}", self.method, self.value, self.stderr, self.reps, bias)
    }
}

/// Fraction of walks from `x` that leave `Ball(r_kill)` before entering `a`
/// (time 0 included), with its binomial standard error.
pub fn escape_probability_mc<R: RngCore + ?Sized>(
    x: Site,
    a: &RangeSet,
    r_kill: f64,
    reps: u64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !(r_kill > x.norm() && r_kill > a.max_norm()) {
        return Err(Error::Precondition(format!(
            "kill radius {r_kill} must exceed |x| = {} and max_norm(A) = {}",
            x.norm(),
            a.max_norm()
        )));
    }
    if reps == 0 {
        return Err(Error::Domain("reps must be positive".into()));
    }
    if a.contains(x) {
        return Ok((0.0, 0.0));
    }
    if a.is_empty() {
        return Ok((1.0, 0.0));
    }
    let kernel = EscapeKernel::new(a);
    Ok(kernel_probability(&kernel, x, r_kill, reps, fresh_seed(rng)))
}

pub(crate) fn kernel_probability(
    kernel: &EscapeKernel<'_>,
    x: Site,
    r_kill: f64,
    reps: u64,
    seed: u64,
) -> (f64, f64) {
    let hits = count_successes(reps, seed, |rng| kernel.escapes_from(x, r_kill, rng));
    binomial(hits, reps)
}

fn binomial(successes: u64, reps: u64) -> (f64, f64) {
    let p = successes as f64 / reps as f64;
    (p, (p * (1.0 - p) / reps as f64).sqrt())
}

/// Escape estimate of the capacity with outer radius
/// `max(r_factor * max_norm(A), DEFAULT_RADIUS_FLOOR)`.
pub fn cap_mc_escape<R: RngCore + ?Sized>(
    a: &RangeSet,
    green: &GreenTable,
    r_factor: f64,
    reps: u64,
    rng: &mut R,
) -> Result<CapEstimate> {
    cap_mc_escape_with_floor(a, green, r_factor, DEFAULT_RADIUS_FLOOR, reps, rng)
}

/// As [`cap_mc_escape`] with an explicit floor on the outer radius.
///
/// `bias_bound` adds to `value * max_norm / R` the re-entry term
/// `value^2 * c1 * (R - max_norm)^(2-d)`: walks leaving the ball come back
/// with probability about `cap * G` at that distance.
pub fn cap_mc_escape_with_floor<R: RngCore + ?Sized>(
    a: &RangeSet,
    green: &GreenTable,
    r_factor: f64,
    radius_floor: f64,
    reps: u64,
    rng: &mut R,
) -> Result<CapEstimate> {
    if a.is_empty() {
        return Err(Error::Domain("capacity of the empty set".into()));
    }
    if r_factor.is_nan() || r_factor < 4.0 {
        return Err(Error::Precondition(format!("R_factor = {r_factor} must be at least 4")));
    }
    if reps == 0 {
        return Err(Error::Domain("reps must be positive".into()));
    }
    let max_norm = a.max_norm();
    let r = (r_factor * max_norm).max(radius_floor);
    let kernel = EscapeKernel::new(a);
    let sites = a.sites();
    let successes = count_successes(reps, fresh_seed(rng), |rng| {
        let x = sites[rand::Rng::random_range(rng, 0..sites.len())];
        kernel.escapes_after_leaving(x, r, rng)
    });
    let (p, se) = binomial(successes, reps);
    let n = a.count() as f64;
    let value = n * p;
    let d = a.dim().as_f64();
    let reentry = value * value * green.c1() * (r - max_norm).powf(2.0 - d);
    Ok(CapEstimate {
        value,
        stderr: n * se,
        reps,
        method: CapMethod::McEscape,
        bias_bound: Some(value * max_norm / r + reentry),
    })
}

/// `P_{x_far}(τ_A < ∞) / G(x_far)` with walks killed outside `Ball(8 |x_far|)`.
pub fn cap_farpoint<R: RngCore + ?Sized>(
    a: &RangeSet,
    green: &GreenTable,
    x_far: Site,
    reps: u64,
    rng: &mut R,
) -> Result<CapEstimate> {
    if a.is_empty() {
        return Err(Error::Domain("capacity of the empty set".into()));
    }
    if reps == 0 {
        return Err(Error::Domain("reps must be positive".into()));
    }
    let rho = x_far.norm();
    let max_norm = a.max_norm();
    if rho < 2.0 * max_norm {
        return Err(Error::Precondition(format!(
            "|x_far| = {rho} is below 2 max_norm(A) = {}",
            2.0 * max_norm
        )));
    }
    let g = green.green(x_far);
    let (p_hit, se) = if a.contains(x_far) {
        (1.0, 0.0)
    } else {
        let kernel = EscapeKernel::new(a);
        let (esc, se) = kernel_probability(&kernel, x_far, FARPOINT_KILL_FACTOR * rho, reps, fresh_seed(rng));
        (1.0 - esc, se)
    };
    let value = p_hit / g;
    let d = a.dim().as_f64();
    let location = if rho > 0.0 { max_norm / rho } else { 0.0 };
    let kill = FARPOINT_KILL_FACTOR.powf(2.0 - d);
    Ok(CapEstimate {
        value,
        stderr: se / g,
        reps,
        method: CapMethod::FarPoint,
        bias_bound: Some(value * (location + kill)),
    })
}
