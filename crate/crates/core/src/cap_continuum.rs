//! Newtonian capacity of thickened point clouds by walk-on-spheres, and the
//! comparison between lattice capacity and the capacity of the rescaled range.

use std::collections::HashMap;
use std::hash::BuildHasherDefault;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::brw::{range, BranchingWalk};
use crate::cap_discrete::{cap_exact, count_successes, fresh_seed};
use crate::error::{Error, Result};
use crate::lattice::{new_site_set, Dim, Site, SiteHasher, SiteSet, MAX_DIM};
use crate::lattice_green::{c1_constant, GreenTable};

/// Walks stop as hits at distance `eps * HIT_TOL_FACTOR` from the thickened cloud.
pub const HIT_TOL_FACTOR: f64 = 1e-3;
/// Default kill radius in units of the starting sphere radius.
pub const KILL_FACTOR: f64 = 10.0;

/// Finite set of points in R^d with a thickening radius.
#[derive(Debug, Clone)]
pub struct PointCloud {
    dim: Dim,
    points: Vec<[f64; MAX_DIM]>,
    radius_bound: f64,
    eps: f64,
}

impl PointCloud {
    pub fn new(dim: Dim, points: Vec<Vec<f64>>, eps: f64) -> Result<Self> {
        let d = dim.get();
        let mut packed = Vec::with_capacity(points.len());
        for p in &points {
            if p.len() != d {
                return Err(Error::Domain(format!("point has {} coordinates, expected {d}", p.len())));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("point coordinates must be finite".into()));
            }
            let mut c = [0.0; MAX_DIM];
            c[..d].copy_from_slice(p);
            packed.push(c);
        }
        Self::from_packed(dim, packed, eps)
    }

    /// `scale * A` for a lattice range `A`.
    pub fn from_range(set: &crate::brw::RangeSet, scale: f64, eps: f64) -> Result<Self> {
        let d = set.dim().get();
        let packed = set
            .sites()
            .iter()
            .map(|s| {
                let mut c = [0.0; MAX_DIM];
                for a in 0..d {
                    c[a] = scale * s.0[a] as f64;
                }
                c
            })
            .collect();
        Self::from_packed(set.dim(), packed, eps)
    }

    fn from_packed(dim: Dim, points: Vec<[f64; MAX_DIM]>, eps: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("point cloud is empty".into()));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Domain(format!("thickening radius must be positive, got {eps}")));
        }
        let radius_bound = points
            .iter()
            .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(Self {
            dim,
            points,
            radius_bound,
            eps,
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i][..self.dim.get()]
    }

    /// `max |p|` over the points.
    pub fn radius_bound(&self) -> f64 {
        self.radius_bound
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// The cloud `λ·A` thickened by `λ·ε`, the image of `A^ε` under `x ↦ λx`.
    pub fn dilate(&self, lambda: f64) -> Result<Self> {
        let points = self.points.iter().map(|p| p.map(|v| lambda * v)).collect();
        Self::from_packed(self.dim, points, lambda * self.eps)
    }

    /// Sphere radius used when the caller has no preference.
    pub fn default_sphere_radius(&self) -> f64 {
        2.0 * (self.radius_bound + self.eps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonianEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Radius of the starting sphere.
    pub r: f64,
    pub kill_radius: f64,
    pub reps: u64,
    pub eps: f64,
}

impl NewtonianEstimate {
    pub const CSV_HEADER: &'static str = "value,stderr,r,kill_radius,reps,eps";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.value, self.stderr, self.r, self.kill_radius, self.reps, self.eps
        )
    }
}

/// `(d / c1) r^{d-2}`: the Newtonian capacity of `Ball(r)`, and the total mass of
/// the uniform sphere measure whose potential is 1 inside the ball.
pub fn ball_capacity(dim: Dim, r: f64) -> f64 {
    let c1 = c1_constant(dim.get()).expect("Dim is always supported");
    dim.as_f64() / c1 * r.powi(dim.get() as i32 - 2)
}

/// `cap(A^ε) = (d/c1) r^{d-2} · P(BM started uniformly on ∂Ball(r) hits A^ε)`.
///
/// Brownian paths are sampled by walk-on-spheres with hops of at most `r`.
/// A walk that passes `kill_radius` returns to `Ball(r)` with probability
/// `(r/|x|)^{d-2}`; it is then restarted at a uniform point of the sphere,
/// not from the true harmonic measure, which is the main systematic error.
pub fn cap_newtonian<R: RngCore + ?Sized>(
    cloud: &PointCloud,
    r: f64,
    kill_radius: f64,
    reps: u64,
    rng: &mut R,
) -> Result<NewtonianEstimate> {
    if reps == 0 {
        return Err(Error::Domain("reps must be positive".into()));
    }
    if !(r > cloud.radius_bound + cloud.eps) || !r.is_finite() {
        return Err(Error::Precondition(format!(
            "the thickened cloud reaches radius {} and must lie inside Ball(r = {r})",
            cloud.radius_bound + cloud.eps
        )));
    }
    if !(kill_radius >= KILL_FACTOR * r) || !kill_radius.is_finite() {
        return Err(Error::Precondition(format!(
            "kill radius {kill_radius} must be at least {KILL_FACTOR} r = {}",
            KILL_FACTOR * r
        )));
    }
    let seed = fresh_seed(rng);
    let hits = match cloud.dim.get() {
        3 => Wos::<3>::new(cloud, r, kill_radius).count_hits(reps, seed),
        4 => Wos::<4>::new(cloud, r, kill_radius).count_hits(reps, seed),
        _ => Wos::<5>::new(cloud, r, kill_radius).count_hits(reps, seed),
    };
    let p = hits as f64 / reps as f64;
    let mass = ball_capacity(cloud.dim, r);
    Ok(NewtonianEstimate {
        value: p * mass,
        stderr: (p * (1.0 - p) / reps as f64).sqrt() * mass,
        r,
        kill_radius,
        reps,
        eps: cloud.eps,
    })
}

struct Wos<const D: usize> {
    index: GridIndex<D>,
    eps: f64,
    hit_tol: f64,
    /// Radius of a ball containing the thickened cloud.
    outer: f64,
    r: f64,
    max_hop: f64,
    kill: f64,
}

impl<const D: usize> Wos<D> {
    fn new(cloud: &PointCloud, r: f64, kill: f64) -> Self {
        let pts: Vec<[f64; D]> = cloud
            .points
            .iter()
            .map(|p| std::array::from_fn(|a| p[a]))
            .collect();
        Self {
            index: GridIndex::new(pts, cloud.eps),
            eps: cloud.eps,
            hit_tol: HIT_TOL_FACTOR * cloud.eps,
            outer: cloud.radius_bound + cloud.eps,
            r,
            max_hop: r,
            kill,
        }
    }

    fn count_hits(&self, reps: u64, seed: u64) -> u64 {
        count_successes(reps, seed, |rng| self.hits(rng))
    }

    fn on_sphere(rng: &mut ChaCha8Rng, radius: f64) -> [f64; D] {
        loop {
            let g: [f64; D] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let n2: f64 = g.iter().map(|v| v * v).sum();
            if n2 > 1e-24 {
                let s = radius / n2.sqrt();
                return g.map(|v| v * s);
            }
        }
    }

    fn hits(&self, rng: &mut ChaCha8Rng) -> bool {
        let mut x = Self::on_sphere(rng, self.r);
        loop {
            let rad = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rad > self.kill {
                let back = (self.r / rad).powi(D as i32 - 2);
                if rng.random::<f64>() >= back {
                    return false;
                }
                x = Self::on_sphere(rng, self.r);
                continue;
            }
            // outside Ball(outer) the gap to it already bounds the distance
            let hop = if rad - self.outer >= self.max_hop {
                self.max_hop
            } else {
                let gap = self.index.distance_lower_bound(&x) - self.eps;
                if gap <= self.hit_tol {
                    return true;
                }
                gap.min(self.max_hop)
            };
            let dx = Self::on_sphere(rng, hop);
            for a in 0..D {
                x[a] += dx[a];
            }
        }
    }
}

/// Fine shells searched exactly around a query cell.
const FINE_SHELLS: i32 = 2;

/// Uniform grid of cell size `h` over the points, with coarser occupancy
/// levels of cell size `h 2^k` for cheap lower bounds far from the cloud.
struct GridIndex<const D: usize> {
    h: f64,
    points: Vec<[f64; D]>,
    /// Level-0 cell to a range of `points`, which are sorted by cell.
    cells: HashMap<Site, (u32, u32), BuildHasherDefault<SiteHasher>>,
    coarse: Vec<SiteSet>,
    /// Offsets of the fine search cube grouped by Chebyshev shell.
    shells: Vec<Vec<[i32; D]>>,
    ring: Vec<[i32; D]>,
    lo: [f64; D],
    hi: [f64; D],
}

impl<const D: usize> GridIndex<D> {
    fn new(mut points: Vec<[f64; D]>, h: f64) -> Self {
        let key = |p: &[f64; D]| -> Site {
            let mut c = [0i32; MAX_DIM];
            for a in 0..D {
                c[a] = (p[a] / h).floor() as i32;
            }
            Site(c)
        };
        points.sort_by_key(|p| key(p).0);
        let mut cells = HashMap::with_capacity_and_hasher(points.len(), Default::default());
        let mut start = 0;
        while start < points.len() {
            let k = key(&points[start]);
            let mut end = start + 1;
            while end < points.len() && key(&points[end]) == k {
                end += 1;
            }
            cells.insert(k, (start as u32, end as u32));
            start = end;
        }
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for p in &points {
            for a in 0..D {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent = (0..D).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        let mut coarse = Vec::new();
        let mut level: Vec<Site> = cells.keys().copied().collect();
        let mut size = h;
        while size <= 2.0 * extent + h {
            let next: SiteSet = level
                .iter()
                .map(|s| {
                    let mut c = s.0;
                    for v in c.iter_mut().take(D) {
                        *v >>= 1;
                    }
                    Site(c)
                })
                .collect();
            level = next.iter().copied().collect();
            coarse.push(next);
            size *= 2.0;
        }
        if coarse.is_empty() {
            coarse.push(new_site_set(0));
        }
        let cube = |m: i32| -> Vec<[i32; D]> {
            let side = (2 * m + 1) as usize;
            (0..side.pow(D as u32))
                .map(|mut k| {
                    std::array::from_fn(|_| {
                        let v = (k % side) as i32 - m;
                        k /= side;
                        v
                    })
                })
                .collect()
        };
        let mut shells = vec![Vec::new(); FINE_SHELLS as usize + 1];
        for off in cube(FINE_SHELLS) {
            let s = off.iter().map(|v| v.abs()).max().unwrap_or(0);
            shells[s as usize].push(off);
        }
        Self {
            h,
            points,
            cells,
            coarse,
            shells,
            ring: cube(1),
            lo,
            hi,
        }
    }

    /// Lower bound on the distance from `x` to the nearest point; exact whenever
    /// the result is at most `FINE_SHELLS · h`.
    fn distance_lower_bound(&self, x: &[f64; D]) -> f64 {
        let mut cell = [0i32; D];
        for a in 0..D {
            cell[a] = (x[a] / self.h).floor() as i32;
        }
        let mut best2 = f64::INFINITY;
        for (s, shell) in self.shells.iter().enumerate() {
            for off in shell {
                let mut c = [0i32; MAX_DIM];
                for a in 0..D {
                    c[a] = cell[a] + off[a];
                }
                if let Some(&(b, e)) = self.cells.get(&Site(c)) {
                    for p in &self.points[b as usize..e as usize] {
                        let mut d2 = 0.0;
                        for a in 0..D {
                            d2 += (p[a] - x[a]) * (p[a] - x[a]);
                        }
                        best2 = best2.min(d2);
                    }
                }
            }
            // unvisited cells are at least s·h away
            let reach = s as f64 * self.h;
            if best2 <= reach * reach {
                return best2.sqrt();
            }
        }
        let mut bound = best2.sqrt().min(FINE_SHELLS as f64 * self.h);
        let mut size = self.h;
        for level in &self.coarse {
            size *= 2.0;
            let mut occupied = false;
            'ring: for off in &self.ring {
                let mut c = [0i32; MAX_DIM];
                for a in 0..D {
                    c[a] = (x[a] / size).floor() as i32 + off[a];
                }
                if level.contains(&Site(c)) {
                    occupied = true;
                    break 'ring;
                }
            }
            if occupied {
                break;
            }
            bound = bound.max(size);
        }
        let mut out2 = 0.0;
        for a in 0..D {
            let t = (self.lo[a] - x[a]).max(x[a] - self.hi[a]).max(0.0);
            out2 += t * t;
        }
        bound.max(out2.sqrt())
    }
}

/// Both sides of the lattice/continuum capacity comparison for one tree.
#[derive(Debug, Clone)]
pub struct Theorem1Check {
    pub n: usize,
    pub range_count: usize,
    pub cap_exact: f64,
    /// `n^{-(d-2)/4} cap(R_n)`.
    pub lhs: f64,
    /// `(1/d) cap(n^{-1/4} R_n thickened by ε)`.
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub ratio: f64,
    pub newtonian: NewtonianEstimate,
}

/// Compare `n^{-(d-2)/4} cap(R_n)` with `(1/d)` times the Newtonian capacity of
/// the ε-neighborhood of the rescaled range `n^{-1/4} R_n`.
///
/// `r = None` uses [`PointCloud::default_sphere_radius`]; the kill radius is
/// always `KILL_FACTOR · r`.
pub fn theorem1_check<R: RngCore + ?Sized>(
    bw: &BranchingWalk,
    green: &GreenTable,
    eps: f64,
    r: Option<f64>,
    reps: u64,
    rng: &mut R,
) -> Result<Theorem1Check> {
    if bw.tree().is_none() {
        return Err(Error::Precondition("the comparison needs a finite tree".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("ε must lie in (0, 1), got {eps}")));
    }
    let d = bw.dim().get();
    let n = bw.len();
    let set = range(bw);
    let eq = cap_exact(&set, green)?;
    let nf = n as f64;
    let lhs = nf.powf(-(d as f64 - 2.0) / 4.0) * eq.capacity();
    let cloud = PointCloud::from_range(&set, nf.powf(-0.25), eps)?;
    let r = r.unwrap_or_else(|| cloud.default_sphere_radius());
    let est = cap_newtonian(&cloud, r, KILL_FACTOR * r, reps, rng)?;
    let rhs = est.value / d as f64;
    Ok(Theorem1Check {
        n,
        range_count: set.count(),
        cap_exact: eq.capacity(),
        lhs,
        rhs,
        rhs_stderr: est.stderr / d as f64,
        ratio: lhs / rhs,
        newtonian: est,
    })
}
