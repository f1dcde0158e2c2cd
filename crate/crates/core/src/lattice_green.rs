//! Green function of the simple random walk on Z^d and of Brownian motion on R^d.
//!
//! Near-field values come from the continuous-time representation of the
//! lattice Fourier integral,
//!
//! ```text
//! G(x) = d * ∫_0^∞ Π_i e^{-s} I_{x_i}(s) ds,
//! ```
//!
//! which follows from `1/(1 - φ(k)) = ∫ e^{-t(1 - φ(k))} dt` and factorizes the
//! d-dimensional integral over [-π, π]^d into one-dimensional Bessel factors.
//! The integral is evaluated with composite Gauss–Legendre quadrature in
//! `u = ln s`; the slowly decaying `s^{-d/2}` tail beyond `TAIL_START` is
//! integrated in closed form from the Hankel expansion of `I_k`.
//! Beyond the table radius the leading asymptotic `c1 |x|^{2-d}` is used.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::lattice::{Dim, Site, MAX_DIM};

pub const DEFAULT_NEAR_RADIUS: u32 = 64;
pub const DEFAULT_QUADRATURE_TOL: f64 = 1e-9;
pub const CACHE_ENV_VAR: &str = "BRWLAB_CACHE_DIR";

const CACHE_MAGIC: &[u8; 4] = b"GRNT";
const CACHE_VERSION: u32 = 1;

const LOG_S_MIN: f64 = -30.0;
const TAIL_START: f64 = 1.0e6;
const PANEL_WIDTH: f64 = 0.25;
const NODES_PER_PANEL: usize = 16;
const TAIL_ORDER: usize = 8;
/// Nodes whose integrand is provably below this are skipped.
const NEGLIGIBLE: f64 = 1e-18;

/// `c1 = d Γ(d/2 - 1) / (2 π^{d/2})`, the constant of the leading Green asymptotic.
pub fn c1_constant(dim: usize) -> Result<f64> {
    let d = Dim::new(dim)?.as_f64();
    Ok(d * gamma(d / 2.0 - 1.0) / (2.0 * std::f64::consts::PI.powf(d / 2.0)))
}

/// Green function of standard Brownian motion, `g(x) = Γ(d/2-1)/(2π^{d/2}) |x|^{2-d}`.
#[derive(Debug, Clone, Copy)]
pub struct ContinuumGreen {
    dim: Dim,
    coefficient: f64,
}

impl ContinuumGreen {
    pub fn new(dim: Dim) -> Self {
        let d = dim.as_f64();
        let coefficient = gamma(d / 2.0 - 1.0) / (2.0 * std::f64::consts::PI.powf(d / 2.0));
        Self { dim, coefficient }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    /// `g` as a function of the radius `|x|`.
    pub fn at_radius(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Err(Error::Singularity);
        }
        Ok(self.coefficient * r.powi(2 - self.dim.get() as i32))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.at_radius(r)
    }
}

pub fn g_continuum(dim: usize, x: &[f64]) -> Result<f64> {
    let dim = Dim::new(dim)?;
    if x.len() != dim.get() {
        return Err(Error::Domain(format!(
            "point has {} coordinates, expected {dim}",
            x.len()
        )));
    }
    ContinuumGreen::new(dim).eval(x)
}

/// `e^{-s} I_k(s)` for `k = 0..=kmax` by Miller's backward recurrence,
/// normalized with `I_0(s) + 2 Σ_{k≥1} I_k(s) = e^s`.
pub fn scaled_bessel_i(s: f64, kmax: usize) -> Vec<f64> {
    assert!(s > 0.0, "argument must be positive");
    let start = kmax + 30 + (10.0 * s.sqrt()).ceil() as usize;
    let mut out = vec![0.0; kmax + 1];
    let mut above = 0.0;
    let mut current = 1.0;
    let mut sum = 0.0;
    for k in (1..=start).rev() {
        if k <= kmax {
            out[k] = current;
        }
        sum += 2.0 * current;
        let below = above + (2.0 * k as f64 / s) * current;
        above = current;
        current = below;
        if current > 1e250 {
            const SHRINK: f64 = 1e-250;
            current *= SHRINK;
            above *= SHRINK;
            sum *= SHRINK;
            for o in out.iter_mut().skip(k.min(kmax + 1)) {
                *o *= SHRINK;
            }
        }
    }
    out[0] = current;
    sum += current;
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Quadrature state for `G^{(d)}` at lattice points with coordinates up to `kmax`.
struct Quadrature {
    dim: usize,
    s: Vec<f64>,
    /// Gauss–Legendre weight times the Jacobian `s` times the prefactor `d`.
    w: Vec<f64>,
    /// `bessel[k * len + j] = e^{-s_j} I_k(s_j)`
    bessel: Vec<f64>,
    /// Hankel coefficients `(-1)^m a_m(k)` of `e^{-s} I_k(s) sqrt(2πs)`.
    hankel: Vec<[f64; TAIL_ORDER + 1]>,
    /// `d (2π)^{-d/2} ∫_S^∞ s^{-d/2-m} ds`
    tail_moments: [f64; TAIL_ORDER + 1],
    left_tail: f64,
}

impl Quadrature {
    fn new(dim: Dim, kmax: usize) -> Self {
        let d = dim.get();
        let (gl_x, gl_w) = gauss_legendre(NODES_PER_PANEL);
        let u_max = TAIL_START.ln();
        let panels = ((u_max - LOG_S_MIN) / PANEL_WIDTH).ceil() as usize;
        let h = (u_max - LOG_S_MIN) / panels as f64;
        let mut s = Vec::with_capacity(panels * NODES_PER_PANEL);
        let mut w = Vec::with_capacity(panels * NODES_PER_PANEL);
        for p in 0..panels {
            let mid = LOG_S_MIN + (p as f64 + 0.5) * h;
            for (x, wt) in gl_x.iter().zip(&gl_w) {
                let si = (mid + 0.5 * h * x).exp();
                s.push(si);
                w.push(0.5 * h * wt * si * d as f64);
            }
        }
        let len = s.len();
        let mut bessel = vec![0.0; (kmax + 1) * len];
        for (j, &sj) in s.iter().enumerate() {
            for (k, v) in scaled_bessel_i(sj, kmax).into_iter().enumerate() {
                bessel[k * len + j] = v;
            }
        }
        let hankel = (0..=kmax)
            .map(|k| {
                let mut c = [0.0; TAIL_ORDER + 1];
                c[0] = 1.0;
                let k2 = 4.0 * (k as f64) * (k as f64);
                for m in 1..=TAIL_ORDER {
                    let odd = (2 * m - 1) as f64;
                    c[m] = -c[m - 1] * (k2 - odd * odd) / (m as f64 * 8.0);
                }
                c
            })
            .collect();
        let half_d = d as f64 / 2.0;
        let pref = d as f64 * (2.0 * std::f64::consts::PI).powf(-half_d);
        let mut tail_moments = [0.0; TAIL_ORDER + 1];
        for (m, t) in tail_moments.iter_mut().enumerate() {
            let e = half_d + m as f64 - 1.0;
            *t = pref * TAIL_START.powf(-e) / e;
        }
        Self {
            dim: d,
            s,
            w,
            bessel,
            hankel,
            tail_moments,
            left_tail: d as f64 * LOG_S_MIN.exp(),
        }
    }

    fn len(&self) -> usize {
        self.s.len()
    }

    fn row(&self, k: u32) -> &[f64] {
        let len = self.len();
        &self.bessel[k as usize * len..(k as usize + 1) * len]
    }

    /// First node worth summing for a key (or key prefix) with L1 norm `n`
    /// and `Σ ln a_i! = log_fact`. Uses `e^{-s} I_k(s) <= (s/2)^k / k!`, so the
    /// integral over `[0, c]` is at most `2dc (c/2)^n / ((n+1) Π a_i!)`.
    fn first_node(&self, n: u64, log_fact: f64) -> usize {
        if n == 0 {
            return 0;
        }
        let n1 = (n + 1) as f64;
        let log_c = (NEGLIGIBLE.ln() - (2.0 * self.dim as f64 / n1).ln()
            + n as f64 * std::f64::consts::LN_2
            + log_fact)
            / n1;
        let cut = log_c.exp();
        self.s.partition_point(|&s| s < cut)
    }

    fn log_factorial(k: u32) -> f64 {
        (2..=k).map(|i| (i as f64).ln()).sum()
    }

    fn poly_mul(acc: &mut [f64; TAIL_ORDER + 1], c: &[f64; TAIL_ORDER + 1]) {
        let mut out = [0.0; TAIL_ORDER + 1];
        for i in 0..=TAIL_ORDER {
            if acc[i] == 0.0 {
                continue;
            }
            for j in 0..=TAIL_ORDER - i {
                out[i + j] += acc[i] * c[j];
            }
        }
        *acc = out;
    }

    fn tail_from_poly(&self, poly: &[f64; TAIL_ORDER + 1]) -> f64 {
        poly.iter().zip(&self.tail_moments).map(|(p, t)| p * t).sum()
    }

    /// `G(a)` for absolute coordinates `a` (any order), each `<= kmax`.
    fn value(&self, a: &[u32]) -> f64 {
        debug_assert_eq!(a.len(), self.dim);
        let q: u64 = a.iter().map(|&v| (v as u64) * (v as u64)).sum();
        let n: u64 = a.iter().map(|&v| v as u64).sum();
        let log_fact: f64 = a.iter().map(|&v| Self::log_factorial(v)).sum();
        let j0 = self.first_node(n, log_fact);
        let rows: Vec<&[f64]> = a.iter().map(|&k| self.row(k)).collect();
        let mut acc = 0.0;
        for j in j0..self.len() {
            let mut p = self.w[j];
            for r in &rows {
                p *= r[j];
            }
            acc += p;
        }
        let mut poly = [0.0; TAIL_ORDER + 1];
        poly[0] = 1.0;
        for &k in a {
            Self::poly_mul(&mut poly, &self.hankel[k as usize]);
        }
        acc += self.tail_from_poly(&poly);
        if q == 0 {
            acc += self.left_tail;
        }
        acc
    }
}

fn shared_quadrature(dim: Dim) -> &'static Quadrature {
    static CELLS: [OnceLock<Quadrature>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    CELLS[dim.get() - 3].get_or_init(|| Quadrature::new(dim, DEFAULT_NEAR_RADIUS as usize))
}

/// Exact `G^{(d)}(x)` by quadrature, for `|x|_∞ <= DEFAULT_NEAR_RADIUS`.
pub fn green_exact(dim: usize, x: &[i32]) -> Result<f64> {
    let dim = Dim::new(dim)?;
    if x.len() != dim.get() {
        return Err(Error::Domain(format!(
            "point has {} coordinates, expected {dim}",
            x.len()
        )));
    }
    let site = Site::from_slice(x);
    let norm = site.sup_norm();
    if norm > DEFAULT_NEAR_RADIUS {
        return Err(Error::OutOfTable {
            norm,
            r0: DEFAULT_NEAR_RADIUS,
        });
    }
    let a = site.canonical(dim);
    Ok(shared_quadrature(dim).value(&a[..dim.get()]))
}

/// Ranks of sorted coordinate tuples `0 <= a_1 <= ... <= a_d <= r0` in
/// lexicographic order.
#[derive(Debug, Clone)]
struct CanonicalIndex {
    dim: usize,
    r0: u32,
    /// `count[m][lo]` = number of nondecreasing length-`m` sequences in `[lo, r0]`.
    count: Vec<Vec<u64>>,
}

impl CanonicalIndex {
    fn new(dim: usize, r0: u32) -> Self {
        let r = r0 as usize;
        let mut count = vec![vec![0u64; r + 2]; dim + 1];
        for lo in 0..=r + 1 {
            count[0][lo] = 1;
        }
        for m in 1..=dim {
            // count[m][lo] = Σ_{v >= lo} count[m-1][v]
            for lo in (0..=r).rev() {
                count[m][lo] = count[m][lo + 1] + count[m - 1][lo];
            }
        }
        Self { dim, r0, count }
    }

    fn len(&self) -> usize {
        self.count[self.dim][0] as usize
    }

    #[inline]
    fn rank(&self, a: &[u32]) -> usize {
        let mut r = 0u64;
        let mut prev = 0usize;
        for (i, &v) in a.iter().enumerate() {
            let m = self.dim - i;
            r += self.count[m][prev] - self.count[m][v as usize];
            prev = v as usize;
        }
        r as usize
    }

    /// Visit every key in rank order.
    fn for_each(&self, mut f: impl FnMut(usize, &[u32])) {
        let d = self.dim;
        let mut a = vec![0u32; d];
        let mut idx = 0;
        loop {
            f(idx, &a);
            idx += 1;
            // advance to the next nondecreasing tuple
            let mut i = d;
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                if a[i] < self.r0 {
                    a[i] += 1;
                    let v = a[i];
                    for t in a.iter_mut().skip(i + 1) {
                        *t = v;
                    }
                    break;
                }
            }
        }
    }
}

/// Immutable table of `G^{(d)}` on canonical keys with `|x|_∞ <= near_radius`.
#[derive(Debug, Clone)]
pub struct GreenTable {
    dim: Dim,
    near_radius: u32,
    values: Vec<f64>,
    c1: f64,
    quadrature_tol: f64,
    index: CanonicalIndex,
    far: OnceLock<FarField>,
}

impl GreenTable {
    pub fn build(dim: Dim, near_radius: u32) -> Result<Self> {
        if near_radius == 0 {
            return Err(Error::Domain("near radius must be positive".into()));
        }
        let quad = Quadrature::new(dim, near_radius as usize);
        let index = CanonicalIndex::new(dim.get(), near_radius);
        let values = build_values(&quad, &index);
        let table = Self {
            dim,
            near_radius,
            values,
            c1: c1_constant(dim.get())?,
            quadrature_tol: DEFAULT_QUADRATURE_TOL,
            index,
            far: OnceLock::new(),
        };
        table.validate()?;
        Ok(table)
    }

    /// Process-wide table with the default radius, loaded from or written to
    /// the `BRWLAB_CACHE_DIR` cache when that variable is set.
    pub fn shared(dim: Dim) -> Result<Arc<GreenTable>> {
        static CELLS: [OnceLock<Arc<GreenTable>>; 3] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        let cell = &CELLS[dim.get() - 3];
        if let Some(t) = cell.get() {
            return Ok(t.clone());
        }
        let table = Arc::new(Self::load_or_build(dim, DEFAULT_NEAR_RADIUS)?);
        Ok(cell.get_or_init(|| table).clone())
    }

    pub fn cache_path(dir: &Path, dim: Dim, near_radius: u32) -> PathBuf {
        dir.join(format!("green_d{dim}_r{near_radius}.grnt"))
    }

    pub fn load_or_build(dim: Dim, near_radius: u32) -> Result<Self> {
        match std::env::var_os(CACHE_ENV_VAR) {
            Some(dir) if !dir.is_empty() => {
                let dir = PathBuf::from(dir);
                let path = Self::cache_path(&dir, dim, near_radius);
                if path.exists() {
                    Self::load(&path, dim, near_radius)
                } else {
                    let table = Self::build(dim, near_radius)?;
                    fs::create_dir_all(&dir)?;
                    table.save(&path)?;
                    Ok(table)
                }
            }
            _ => Self::build(dim, near_radius),
        }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn near_radius(&self) -> u32 {
        self.near_radius
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn quadrature_tol(&self) -> f64 {
        self.quadrature_tol
    }

    /// Smooth approximation of the table away from the origin, fitted on first use.
    pub fn far_field(&self) -> &FarField {
        self.far.get_or_init(|| FarField::fit(self))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at a canonical key (sorted absolute coordinates, each `<= near_radius`).
    #[inline]
    pub fn canonical_value(&self, key: &[u32]) -> f64 {
        self.values[self.index.rank(key)]
    }

    /// Leading asymptotic `c1 |x|^{2-d}` given `|x|^2 > 0`.
    #[inline]
    pub fn asymptotic(&self, r2: f64) -> f64 {
        match self.dim.get() {
            3 => self.c1 / r2.sqrt(),
            4 => self.c1 / r2,
            _ => self.c1 / (r2 * r2.sqrt()),
        }
    }

    /// `G^{(d)}(x)`: table value inside the near field, `c1 |x|^{2-d}` outside.
    #[inline]
    pub fn green(&self, x: Site) -> f64 {
        if x.sup_norm() <= self.near_radius {
            let key = x.canonical(self.dim);
            self.canonical_value(&key[..self.dim.get()])
        } else {
            self.asymptotic(x.norm_sq() as f64)
        }
    }

    /// Table value at `x`, or an out-of-table error.
    pub fn exact(&self, x: Site) -> Result<f64> {
        let norm = x.sup_norm();
        if norm > self.near_radius {
            return Err(Error::OutOfTable {
                norm,
                r0: self.near_radius,
            });
        }
        Ok(self.green(x))
    }

    /// Worst relative gap between the table and the asymptotic branch on the
    /// shell `|x|_∞ = near_radius`.
    pub fn handoff_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let r0 = self.near_radius;
        self.index.for_each(|i, a| {
            if a[a.len() - 1] == r0 {
                let r2: u64 = a.iter().map(|&v| (v as u64) * (v as u64)).sum();
                let table = self.values[i];
                worst = worst.max((table - self.asymptotic(r2 as f64)).abs() / table);
            }
        });
        worst
    }

    /// Largest violation of discrete harmonicity over stored keys whose
    /// neighbors are all stored (`G(0) = 1 + mean` at the origin).
    pub fn harmonicity_defect(&self) -> f64 {
        let d = self.dim.get();
        let r0 = self.near_radius;
        let mut worst: f64 = 0.0;
        let mut nb = [0u32; MAX_DIM];
        self.index.for_each(|i, a| {
            if a[d - 1] >= r0 {
                return;
            }
            let mut sum = 0.0;
            for axis in 0..d {
                for delta in [-1i64, 1] {
                    nb[..d].copy_from_slice(a);
                    nb[axis] = (a[axis] as i64 + delta).unsigned_abs() as u32;
                    nb[..d].sort_unstable();
                    sum += self.values[self.index.rank(&nb[..d])];
                }
            }
            let source = if a.iter().all(|&v| v == 0) { 1.0 } else { 0.0 };
            let defect = self.values[i] - source - sum / (2 * d) as f64;
            worst = worst.max(defect.abs());
        });
        worst
    }

    /// Check positivity and harmonicity; tables at the default radius or larger
    /// must also hand off to the asymptotic branch within 1%.
    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::Domain(format!("Green table (d = {}): {message}", self.dim));
        if let Some(v) = self.values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(bad(format!("non-positive or non-finite value {v}")));
        }
        let defect = self.harmonicity_defect();
        if defect > 10.0 * self.quadrature_tol {
            return Err(bad(format!("harmonicity defect {defect:.3e} exceeds tolerance")));
        }
        let handoff = self.handoff_error();
        if self.near_radius >= DEFAULT_NEAR_RADIUS && handoff >= 0.01 {
            return Err(bad(format!("near/far hand-off gap {handoff:.3e} is not below 1%")));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("grnt.tmp");
        {
            let mut w = BufWriter::new(fs::File::create(&tmp)?);
            w.write_all(CACHE_MAGIC)?;
            w.write_all(&CACHE_VERSION.to_le_bytes())?;
            w.write_all(&(self.dim.get() as u32).to_le_bytes())?;
            w.write_all(&self.near_radius.to_le_bytes())?;
            for v in &self.values {
                w.write_all(&v.to_le_bytes())?;
            }
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path, dim: Dim, near_radius: u32) -> Result<Self> {
        let cache_err = |message: String| Error::Cache {
            path: path.to_path_buf(),
            message,
        };
        let mut r = BufReader::new(fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(cache_err("bad magic bytes".into()));
        }
        let mut word = [0u8; 4];
        let mut read_u32 = |r: &mut BufReader<fs::File>| -> Result<u32> {
            r.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word))
        };
        let version = read_u32(&mut r)?;
        let file_dim = read_u32(&mut r)?;
        let file_r0 = read_u32(&mut r)?;
        if version != CACHE_VERSION {
            return Err(cache_err(format!("unsupported version {version}")));
        }
        if file_dim as usize != dim.get() || file_r0 != near_radius {
            return Err(cache_err(format!(
                "header says d = {file_dim}, R0 = {file_r0}; expected d = {dim}, R0 = {near_radius}"
            )));
        }
        let index = CanonicalIndex::new(dim.get(), near_radius);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != index.len() * 8 {
            return Err(cache_err(format!(
                "payload holds {} bytes, expected {}",
                bytes.len(),
                index.len() * 8
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let table = Self {
            dim,
            near_radius,
            values,
            c1: c1_constant(dim.get())?,
            quadrature_tol: DEFAULT_QUADRATURE_TOL,
            index,
            far: OnceLock::new(),
        };
        table.validate().map_err(|e| cache_err(format!("invariant check failed on load: {e}")))?;
        Ok(table)
    }
}

/// Number of shape coefficients in the three-order far-field expansion.
pub const FAR_BASIS: usize = 18;
const SWITCH_CANDIDATES: [u32; 8] = [8, 10, 12, 14, 16, 20, 24, 32];
const FIT_SAMPLES: usize = 40_000;

/// `G(x) ≈ c1 r^{2-d} (1 + Σ_{m=1}^{3} r^{-2m} P_m(x/r))` with `P_m` symmetric
/// in the squared direction cosines `u_i = x_i^2 / r^2`.
///
/// Coefficients are fitted to the table on `switch_radius <= |x|_∞ <= R0`, and
/// the switch radius is the smallest candidate where the expansion reproduces
/// every table entry of that band to `quadrature_tol`. Beyond `R0` only the
/// leading term is kept, matching [`GreenTable::green`].
#[derive(Debug, Clone)]
pub struct FarField {
    dim: Dim,
    c1: f64,
    r0: u32,
    switch_radius: u32,
    coef: [f64; FAR_BASIS],
    max_error: f64,
}

impl FarField {
    fn basis(u: &[f64], inv_r2: f64) -> [f64; FAR_BASIS] {
        let p = |k: i32| u.iter().map(|x| x.powi(k)).sum::<f64>();
        let (p2, p3, p4, p5, p6) = (p(2), p(3), p(4), p(5), p(6));
        let (w1, w2, w3) = (inv_r2, inv_r2 * inv_r2, inv_r2 * inv_r2 * inv_r2);
        [
            w1,
            w1 * p2,
            w2,
            w2 * p2,
            w2 * p3,
            w2 * p2 * p2,
            w2 * p4,
            w3,
            w3 * p2,
            w3 * p3,
            w3 * p4,
            w3 * p5,
            w3 * p6,
            w3 * p2 * p2,
            w3 * p2 * p3,
            w3 * p2 * p4,
            w3 * p3 * p3,
            w3 * p2 * p2 * p2,
        ]
    }

    fn direction(key: &[u32]) -> ([f64; MAX_DIM], f64) {
        let r2: f64 = key.iter().map(|&v| (v as f64) * (v as f64)).sum();
        let mut u = [0.0; MAX_DIM];
        for (o, &v) in u.iter_mut().zip(key) {
            *o = (v as f64) * (v as f64) / r2;
        }
        (u, r2)
    }

    fn exact_only(table: &GreenTable) -> Self {
        Self {
            dim: table.dim,
            c1: table.c1,
            r0: table.near_radius,
            switch_radius: table.near_radius + 1,
            coef: [0.0; FAR_BASIS],
            max_error: 0.0,
        }
    }

    fn fit(table: &GreenTable) -> Self {
        let d = table.dim.get();
        let r0 = table.near_radius;
        for &switch in SWITCH_CANDIDATES.iter().filter(|&&s| 2 * s <= r0) {
            let band = |a: &[u32]| a[d - 1] >= switch;
            let mut total = 0usize;
            table.index.for_each(|_, a| total += band(a) as usize);
            let stride = (total / FIT_SAMPLES).max(1);
            let mut rows: Vec<[f64; FAR_BASIS]> = Vec::new();
            let mut rhs = Vec::new();
            let mut seen = 0usize;
            table.index.for_each(|i, a| {
                if !band(a) {
                    return;
                }
                seen += 1;
                // the inner edge of the band is where the fit is hardest: keep all of it
                if a[d - 1] > switch + 2 && seen % stride != 0 {
                    return;
                }
                let (u, r2) = Self::direction(a);
                let lead = table.asymptotic(r2);
                rows.push(Self::basis(&u[..d], 1.0 / r2));
                rhs.push((table.values[i] - lead) / lead);
            });
            let m = DMatrix::from_fn(rows.len(), FAR_BASIS, |i, j| rows[i][j]);
            let Ok(sol) = m.svd(true, true).solve(&DVector::from_vec(rhs), 1e-14) else {
                continue;
            };
            let mut coef = [0.0; FAR_BASIS];
            coef.copy_from_slice(sol.as_slice());
            let candidate = Self {
                dim: table.dim,
                c1: table.c1,
                r0,
                switch_radius: switch,
                coef,
                max_error: 0.0,
            };
            let mut worst: f64 = 0.0;
            table.index.for_each(|i, a| {
                if band(a) {
                    worst = worst.max((candidate.eval_key(a) - table.values[i]).abs());
                }
            });
            if worst <= table.quadrature_tol {
                return Self {
                    max_error: worst,
                    ..candidate
                };
            }
        }
        Self::exact_only(table)
    }

    fn eval_key(&self, key: &[u32]) -> f64 {
        let (u, r2) = Self::direction(key);
        let lead = self.c1 * r2.powf(1.0 - self.dim.as_f64() / 2.0);
        if key.iter().copied().max().unwrap_or(0) > self.r0 {
            return lead;
        }
        let b = Self::basis(&u[..self.dim.get()], 1.0 / r2);
        lead * (1.0 + b.iter().zip(&self.coef).map(|(x, c)| x * c).sum::<f64>())
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// Below this sup-norm the table itself must be used.
    pub fn switch_radius(&self) -> u32 {
        self.switch_radius
    }

    pub fn near_radius(&self) -> u32 {
        self.r0
    }

    /// Largest deviation from the table over the fitted band.
    pub fn max_error(&self) -> f64 {
        self.max_error
    }

    pub fn coefficients(&self) -> &[f64; FAR_BASIS] {
        &self.coef
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    /// Expansion value at `x != 0`.
    pub fn eval(&self, x: Site) -> f64 {
        let key = x.canonical(self.dim);
        self.eval_key(&key[..self.dim.get()])
    }

    /// Hot-loop form: squared coordinate gaps, `r^2` and the sup-norm.
    /// Returns 0 at the origin so the caller can add the exact diagonal.
    #[inline(always)]
    pub fn kernel<const D: usize>(&self, dz2: [f64; D], r2: f64, sup: f64) -> f64 {
        let inv = 1.0 / r2;
        let lead = match D {
            3 => self.c1 * inv.sqrt(),
            4 => self.c1 * inv,
            _ => self.c1 * inv * inv.sqrt(),
        };
        let (mut p2, mut p3, mut p4, mut p5, mut p6) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &z in &dz2 {
            let u = z * inv;
            let u2 = u * u;
            let u3 = u2 * u;
            p2 += u2;
            p3 += u3;
            p4 += u2 * u2;
            p5 += u3 * u2;
            p6 += u3 * u3;
        }
        let c = &self.coef;
        let s1 = c[0] + c[1] * p2;
        let s2 = c[2] + c[3] * p2 + c[4] * p3 + c[5] * p2 * p2 + c[6] * p4;
        let s3 = c[7]
            + c[8] * p2
            + c[9] * p3
            + c[10] * p4
            + c[11] * p5
            + c[12] * p6
            + p2 * (c[13] * p2 + c[14] * p3 + c[15] * p4 + c[17] * p2 * p2)
            + c[16] * p3 * p3;
        let corr = inv * (s1 + inv * (s2 + inv * s3));
        let corr = if sup <= self.r0 as f64 { corr } else { 0.0 };
        let v = lead * (1.0 + corr);
        if r2 > 0.0 {
            v
        } else {
            0.0
        }
    }
}

fn build_values(quad: &Quadrature, index: &CanonicalIndex) -> Vec<f64> {
    let d = index.dim;
    let m = quad.len();
    let mut values = Vec::with_capacity(index.len());
    let mut partials = vec![vec![0.0; m]; d];
    let mut polys = vec![[0.0; TAIL_ORDER + 1]; d];
    let mut key = vec![0u32; d];
    let log_fact: Vec<f64> = (0..=index.r0).map(Quadrature::log_factorial).collect();
    let ctx = Fill {
        quad,
        index,
        log_fact: &log_fact,
    };
    ctx.level(0, 0, (0, 0.0), &mut key, &mut partials, &mut polys, &mut values);
    debug_assert_eq!(values.len(), index.len());
    values
}

struct Fill<'a> {
    quad: &'a Quadrature,
    index: &'a CanonicalIndex,
    log_fact: &'a [f64],
}

impl Fill<'_> {
    /// Enumerate keys in rank order, carrying partial products over the
    /// quadrature nodes and over the Hankel tail polynomials.
    fn level(
        &self,
        level: usize,
        lo: u32,
        prefix: (u64, f64),
        key: &mut [u32],
        partials: &mut [Vec<f64>],
        polys: &mut [[f64; TAIL_ORDER + 1]],
        values: &mut Vec<f64>,
    ) {
        let quad = self.quad;
        let d = self.index.dim;
        let m = quad.len();
        for v in lo..=self.index.r0 {
            key[level] = v;
            let stats = (prefix.0 + v as u64, prefix.1 + self.log_fact[v as usize]);
            let j0 = quad.first_node(stats.0, stats.1);
            let row = quad.row(v);
            if level + 1 == d {
                let prev = &partials[level - 1];
                let mut acc = 0.0;
                for j in j0..m {
                    acc += prev[j] * row[j];
                }
                let mut poly = polys[level - 1];
                Quadrature::poly_mul(&mut poly, &quad.hankel[v as usize]);
                acc += quad.tail_from_poly(&poly);
                if stats.0 == 0 {
                    acc += quad.left_tail;
                }
                values.push(acc);
            } else {
                let (head, tail) = partials.split_at_mut(level);
                let cur = &mut tail[0];
                let prev: &[f64] = if level == 0 { &quad.w } else { &head[level - 1] };
                for j in j0..m {
                    cur[j] = prev[j] * row[j];
                }
                let mut poly = if level == 0 {
                    let mut p = [0.0; TAIL_ORDER + 1];
                    p[0] = 1.0;
                    p
                } else {
                    polys[level - 1]
                };
                Quadrature::poly_mul(&mut poly, &quad.hankel[v as usize]);
                polys[level] = poly;
                self.level(level + 1, v, stats, key, partials, polys, values);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Watson's integral for the cubic lattice.
    const G3_ORIGIN: f64 = 1.516_386_059_151_978;

    #[test]
    fn bessel_matches_series_at_small_argument() {
        // e^{-s} I_k(s) by the power series, an independent route.
        let s = 1.7;
        let got = scaled_bessel_i(s, 6);
        for (k, g) in got.iter().enumerate() {
            let mut term = (s / 2.0f64).powi(k as i32) / (1..=k).map(|i| i as f64).product::<f64>();
            let mut series = 0.0;
            for m in 0..60 {
                series += term;
                term *= (s / 2.0) * (s / 2.0) / ((m + 1) as f64 * (m + 1 + k) as f64);
            }
            let expect = series * (-s).exp();
            assert!((g - expect).abs() < 1e-15, "k={k}: {g} vs {expect}");
        }
    }

    #[test]
    fn bessel_tiny_argument_does_not_overflow() {
        let v = scaled_bessel_i(1e-13, 64);
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(16);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((integral - 2.0 / 31.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn c1_closed_forms() {
        let pi = std::f64::consts::PI;
        assert!((c1_constant(3).unwrap() - 3.0 / (2.0 * pi)).abs() < 1e-14);
        assert!((c1_constant(4).unwrap() - 2.0 / (pi * pi)).abs() < 1e-14);
        assert!((c1_constant(5).unwrap() - 5.0 / (4.0 * pi * pi)).abs() < 1e-14);
        assert!((c1_constant(3).unwrap() - 0.477_464_8).abs() < 1e-7);
        assert!((c1_constant(4).unwrap() - 0.202_642_4).abs() < 1e-7);
        assert!((c1_constant(5).unwrap() - 0.126_651_5).abs() < 1e-7);
        assert!(matches!(c1_constant(6), Err(Error::UnsupportedDimension(6))));
    }

    #[test]
    fn continuum_green_values() {
        let g1 = g_continuum(3, &[1.0, 0.0, 0.0]).unwrap();
        assert!((g1 - 0.159_154_9).abs() < 1e-7);
        let g2 = g_continuum(3, &[0.0, 2.0, 0.0]).unwrap();
        assert!((g2 - g1 / 2.0).abs() < 1e-15);
        let g5 = g_continuum(5, &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((g5 - 0.025_330_3).abs() < 1e-7);
        assert!(matches!(g_continuum(3, &[0.0; 3]), Err(Error::Singularity)));
        let g = ContinuumGreen::new(Dim::D4);
        assert!(g.at_radius(1.0).unwrap() > g.at_radius(1.5).unwrap());
    }

    #[test]
    fn green_exact_origin_cubic_lattice() {
        let g0 = green_exact(3, &[0, 0, 0]).unwrap();
        assert!((g0 - G3_ORIGIN).abs() < 1e-11, "{g0}");
        let ge = green_exact(3, &[1, 0, 0]).unwrap();
        assert!((ge - (G3_ORIGIN - 1.0)).abs() < 1e-11);
        let a = green_exact(3, &[2, -5, 7]).unwrap();
        let b = green_exact(3, &[-2, 5, -7]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn green_exact_errors() {
        assert!(matches!(green_exact(6, &[0; 6]), Err(Error::UnsupportedDimension(6))));
        assert!(matches!(
            green_exact(3, &[65, 0, 0]),
            Err(Error::OutOfTable { norm: 65, r0: 64 })
        ));
    }

    #[test]
    fn green_exact_far_point_approaches_asymptotic() {
        // at |x| = 60 along an axis the correction is O(|x|^{-2}) relative
        for dim in 3..=5 {
            let c1 = c1_constant(dim).unwrap();
            let mut x = vec![0; dim];
            x[0] = 60;
            let g = green_exact(dim, &x).unwrap();
            let asym = c1 * 60f64.powi(2 - dim as i32);
            assert!((g / asym - 1.0).abs() < 1e-3, "d={dim}: {g} vs {asym}");
        }
    }

    #[test]
    fn canonical_index_ranks_in_enumeration_order() {
        let idx = CanonicalIndex::new(4, 5);
        let mut n = 0;
        idx.for_each(|i, a| {
            assert_eq!(idx.rank(a), i);
            n += 1;
        });
        assert_eq!(n, idx.len());
        // C(5 + 4, 4)
        assert_eq!(idx.len(), 126);
    }

    #[test]
    fn small_table_invariants() {
        for dim in Dim::all() {
            let t = GreenTable::build(dim, 12).unwrap();
            assert!(t.harmonicity_defect() < 10.0 * t.quadrature_tol());
            // monotone decay along an axis
            let mut prev = f64::INFINITY;
            for k in 0..=12 {
                let v = t.green(Site::axis(0, k));
                assert!(v < prev);
                prev = v;
            }
            // beyond the table: asymptotic branch
            let far = Site::axis(1, 10_000);
            assert_eq!(t.green(far), t.c1() * 10_000f64.powi(2 - dim.get() as i32));
            assert!(t.exact(far).is_err());
        }
    }

    #[test]
    fn table_agrees_with_direct_quadrature() {
        let t = GreenTable::build(Dim::D5, 9).unwrap();
        for x in [[0, 0, 0, 0, 0], [1, 2, 3, 4, 5], [9, 0, 9, 0, 1], [-3, 3, -3, 3, 3]] {
            let direct = green_exact(5, &x).unwrap();
            let table = t.green(Site::from_slice(&x));
            assert!((direct - table).abs() < 1e-13, "{x:?}: {direct} vs {table}");
        }
    }

    #[test]
    fn default_tables_hand_off() {
        for dim in Dim::all() {
            let t0 = std::time::Instant::now();
            let t = GreenTable::build(dim, DEFAULT_NEAR_RADIUS).unwrap();
            eprintln!("d={dim}: {} entries in {:?}, hand-off {:.3e}", t.len(), t0.elapsed(), t.handoff_error());
            assert!(t.handoff_error() < 0.01);
            assert!((t.green(Site::ORIGIN) - green_exact(dim.get(), &vec![0; dim.get()]).unwrap()).abs() < 1e-14);
            // ratio to the continuum kernel tends to d
            let x = Site::axis(0, 50);
            let ratio = t.green(x) / ContinuumGreen::new(dim).at_radius(50.0).unwrap();
            assert!((ratio / dim.as_f64() - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn far_field_expansion_reproduces_the_table() {
        for dim in Dim::all() {
            let t = GreenTable::shared(dim).unwrap();
            let far = t.far_field();
            assert!(far.switch_radius() <= 16, "d={dim}: switch {}", far.switch_radius());
            assert!(far.max_error() <= t.quadrature_tol());
            // leading correction: (-d(d-2)/8 + (d-2)d(d+2)/24 Σu_i^2) / r^2
            let d = dim.as_f64();
            let c = far.coefficients();
            assert!((c[0] + d * (d - 2.0) / 8.0).abs() < 1e-3, "{}", c[0]);
            assert!((c[1] - (d - 2.0) * d * (d + 2.0) / 24.0).abs() < 1e-3, "{}", c[1]);
            for x in [Site::axis(0, 20), Site::from_slice(&[13, -40, 7, 2, 64]), Site::axis(2, 64)] {
                let x = Site::from_slice(&x.0[..dim.get()]);
                assert!((far.eval(x) - t.green(x)).abs() <= t.quadrature_tol());
            }
            let beyond = Site::axis(0, 65);
            assert!((far.eval(beyond) / t.green(beyond) - 1.0).abs() < 1e-14);
            // hot-loop form agrees with the plain one
            let x = [3.0f64, -17.0, 5.0, 9.0, 1.0];
            let site = Site::from_slice(&[3, -17, 5, 9, 1][..dim.get()]);
            let r2 = site.norm_sq() as f64;
            let sup = site.sup_norm() as f64;
            let k = match dim.get() {
                3 => far.kernel([x[0] * x[0], x[1] * x[1], x[2] * x[2]], r2, sup),
                4 => far.kernel([x[0] * x[0], x[1] * x[1], x[2] * x[2], x[3] * x[3]], r2, sup),
                _ => far.kernel(x.map(|v| v * v), r2, sup),
            };
            assert!((k - far.eval(site)).abs() < 1e-15);
            assert_eq!(far.kernel([0.0; 3], 0.0, 0.0), 0.0);
        }
    }

    #[test]
    fn cache_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let t = GreenTable::build(Dim::D3, 10).unwrap();
        let path = GreenTable::cache_path(dir.path(), Dim::D3, 10);
        t.save(&path).unwrap();
        let back = GreenTable::load(&path, Dim::D3, 10).unwrap();
        assert_eq!(back.values, t.values);
        assert!(GreenTable::load(&path, Dim::D3, 11).is_err());

        // flip one stored value: harmonicity check must reject it
        let mut bytes = fs::read(&path).unwrap();
        let off = 16 + 8 * 7;
        let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) * 1.001;
        bytes[off..off + 8].copy_from_slice(&v.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        let err = GreenTable::load(&path, Dim::D3, 10).unwrap_err();
        assert!(matches!(err, Error::Cache { .. }), "{err}");
    }
}
