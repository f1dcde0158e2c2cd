//! Equilibrium vector by preconditioned conjugate gradients on the Green system.

use std::collections::HashMap;

use crate::brw::RangeSet;
use crate::error::{Error, Result};
use crate::lattice::{Dim, Site, MAX_DIM};
use crate::lattice_green::{FarField, GreenTable};

pub const CG_TOL: f64 = 1e-8;

/// Escape probabilities `P_x(τ_A^+ = ∞)`, `x ∈ A`.
#[derive(Debug, Clone)]
pub struct EquilibriumVector {
    sites: Vec<Site>,
    v: Vec<f64>,
    capacity: f64,
    residual: f64,
    iterations: usize,
}

impl EquilibriumVector {
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Relative residual `|1 - G v| / |1|` of the reduced system.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

/// Compressed rows of a sparse matrix.
#[derive(Debug, Default)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Csr {
    fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *yi += acc;
        }
    }
}

/// `y = G_BB x`, streamed over pairs without storing the matrix.
///
/// Each entry is the smooth far-field expansion plus a correction read from a
/// small cube indexed by `min(|z_i|, w)`; the correction is the exact table
/// value minus the expansion inside the switch box and zero on its faces.
struct GreenOperator<'a, const D: usize> {
    coords: [Vec<f64>; D],
    far: &'a FarField,
    cube: Vec<f64>,
    w: f64,
    stride: [f64; D],
    simd: bool,
}

impl<'a, const D: usize> GreenOperator<'a, D> {
    fn new(sites: &[Site], green: &'a GreenTable, vectorized: bool) -> Self {
        let far = green.far_field();
        let coords = std::array::from_fn(|a| sites.iter().map(|s| s.0[a] as f64).collect());
        let w = far.switch_radius() as usize;
        let side = w + 1;
        let stride = std::array::from_fn(|a| side.pow(a as u32) as f64);
        let mut cube = vec![0.0; side.pow(D as u32)];
        for (idx, slot) in cube.iter_mut().enumerate() {
            let mut c = [0i32; MAX_DIM];
            let mut rest = idx;
            for item in c.iter_mut().take(D) {
                *item = (rest % side) as i32;
                rest /= side;
            }
            let z = Site(c);
            if z.sup_norm() as usize >= w {
                continue;
            }
            let mut dz2 = [0.0; D];
            for a in 0..D {
                dz2[a] = (c[a] as f64) * (c[a] as f64);
            }
            let r2 = dz2.iter().sum();
            *slot = green.green(z) - far.kernel(dz2, r2, z.sup_norm() as f64);
        }
        Self {
            coords,
            far,
            cube,
            w: w as f64,
            stride,
            simd: vectorized && simd_available(),
        }
    }

    fn len(&self) -> usize {
        self.coords[0].len()
    }

    /// `buf[k] = G(x_i - x_{lo + k})`.
    #[inline(never)]
    fn fill_row(&self, i: usize, lo: usize, buf: &mut [f64]) {
        let m = buf.len();
        let xi: [f64; D] = std::array::from_fn(|a| self.coords[a][i]);
        let cs: [&[f64]; D] = std::array::from_fn(|a| &self.coords[a][lo..lo + m]);
        let cube = self.cube.as_slice();
        let last = (cube.len() - 1) as f64;
        for k in 0..m {
            let mut dz2 = [0.0; D];
            let mut r2 = 0.0;
            let mut sup: f64 = 0.0;
            let mut idx = 0.0;
            for a in 0..D {
                let t = xi[a] - cs[a][k];
                let at = t.abs();
                dz2[a] = t * t;
                r2 += t * t;
                sup = sup.max(at);
                idx += at.min(self.w) * self.stride[a];
            }
            let idx = idx.min(last) as usize;
            // SAFETY: idx <= cube.len() - 1 by the clamp above.
            let corr = unsafe { *cube.get_unchecked(idx) };
            buf[k] = self.far.kernel(dz2, r2, sup) + corr;
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64], buf: &mut [f64]) {
        let n = self.len();
        y.fill(0.0);
        let diag = self.cube[0];
        #[cfg(target_arch = "x86_64")]
        if self.simd {
            let kernel = super::simd::RowKernel::<D> {
                coords: std::array::from_fn(|a| self.coords[a].as_slice()),
                far: self.far,
                cube: &self.cube,
                w: self.w,
                stride: self.stride,
            };
            for i in 0..n {
                // SAFETY: feature support was detected at construction; x and y
                // have one entry per site.
                let upper = unsafe { kernel.upper_row(i, x, y) };
                y[i] += diag * x[i] + upper;
            }
            return;
        }
        for i in 0..n {
            let row = &mut buf[..n - i - 1];
            self.fill_row(i, i + 1, row);
            let xi = x[i];
            y[i] += diag * xi + dot(row, &x[i + 1..]);
            for (yj, g) in y[i + 1..].iter_mut().zip(row.iter()) {
                *yj += g * xi;
            }
        }
    }
}

/// `I - (1/2d) Adj` on the solved sites: the lattice Laplacian, which inverts
/// `G` on all of Z^d.
fn laplacian(sites: &[Site], dim: Dim) -> Csr {
    let index: HashMap<Site, u32> = sites.iter().enumerate().map(|(i, s)| (*s, i as u32)).collect();
    let w = -1.0 / (2 * dim.get()) as f64;
    let mut csr = Csr {
        row_ptr: vec![0],
        ..Default::default()
    };
    for (i, s) in sites.iter().enumerate() {
        csr.cols.push(i as u32);
        csr.vals.push(1.0);
        for a in 0..dim.get() {
            for dz in [-1, 1] {
                if let Some(&j) = index.get(&s.add(Site::axis(a, dz))) {
                    csr.cols.push(j);
                    csr.vals.push(w);
                }
            }
        }
        csr.row_ptr.push(csr.cols.len());
    }
    csr
}

fn simd_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        super::simd::available()
    }
    #[cfg(not(target_arch = "x86_64"))]
    false
}

/// Dot product with eight interleaved partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Solve `G_AA v = 1` for a nonempty set.
///
/// Sites whose 2d neighbors all lie in `A` cannot escape, so `v = 0` there and
/// the system is solved on the remaining sites only.
pub fn cap_exact(a: &RangeSet, green: &GreenTable) -> Result<EquilibriumVector> {
    cap_exact_with(a, green, &SolverOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target relative residual.
    pub tol: f64,
    /// Use the AVX-512 row kernel when the CPU has it.
    pub vectorized: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: CG_TOL,
            vectorized: true,
        }
    }
}

pub fn cap_exact_with(a: &RangeSet, green: &GreenTable, opts: &SolverOptions) -> Result<EquilibriumVector> {
    let tol = opts.tol;
    if a.is_empty() {
        return Err(Error::Domain("capacity of the empty set".into()));
    }
    if a.dim() != green.dim() {
        return Err(Error::Domain(format!(
            "set lives in d = {} but the Green table is for d = {}",
            a.dim(),
            green.dim()
        )));
    }
    let d = a.dim().get();
    let exposed: Vec<usize> = a
        .sites()
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            (0..d).any(|ax| [-1, 1].iter().any(|&dz| !a.contains(s.add(Site::axis(ax, dz)))))
        })
        .map(|(i, _)| i)
        .collect();
    let sub: Vec<Site> = exposed.iter().map(|&i| a.sites()[i]).collect();
    let (w, residual, iterations) = match d {
        3 => solve::<3>(&sub, green, tol, opts.vectorized, 10 * a.count())?,
        4 => solve::<4>(&sub, green, tol, opts.vectorized, 10 * a.count())?,
        _ => solve::<5>(&sub, green, tol, opts.vectorized, 10 * a.count())?,
    };
    let mut v = vec![0.0; a.count()];
    for (k, &i) in exposed.iter().enumerate() {
        v[i] = w[k];
    }
    let capacity = v.iter().sum();
    Ok(EquilibriumVector {
        sites: a.sites().to_vec(),
        v,
        capacity,
        residual,
        iterations,
    })
}

fn solve<const D: usize>(
    sites: &[Site],
    green: &GreenTable,
    tol: f64,
    vectorized: bool,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, usize)> {
    let n = sites.len();
    let op = GreenOperator::<D>::new(sites, green, vectorized);
    let pre = laplacian(sites, green.dim());
    let b = vec![1.0; n];
    let b_norm = (n as f64).sqrt();
    let precondition = |r: &[f64], z: &mut [f64]| {
        z.fill(0.0);
        pre.apply_add(r, z);
    };

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut buf = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    loop {
        if iterations >= max_iter {
            let rel = dot(&r, &r).sqrt() / b_norm;
            return Err(Error::Solver {
                iterations,
                residual: rel,
            });
        }
        op.apply(&p, &mut ap, &mut buf);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        if dot(&r, &r).sqrt() / b_norm <= tol {
            // confirm against the true residual; restart from it if the recursion drifted
            op.apply(&x, &mut ap, &mut buf);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            let rel = dot(&r, &r).sqrt() / b_norm;
            if rel <= tol {
                return Ok((x, rel, iterations));
            }
            precondition(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
}
