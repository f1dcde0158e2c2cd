//! Accelerated simple random walk for hitting/escape questions.
//!
//! Away from the target set the walk jumps straight to its exit point from
//! the largest tabulated sup-norm cube around it that contains no site of the
//! set; next to the set it takes single steps. The visited sequence of cube
//! exits has exactly the law of the simple random walk observed at those
//! times, so hitting the set is never skipped. The kill sphere is checked
//! after each move.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cube_exit::CubeExitTables;
use crate::brw::RangeSet;
use crate::lattice::{Site, MAX_DIM};

const MAX_GRID_CELLS: usize = 1 << 18;
const GRID_MARGIN: i32 = 4;
const CHUNK: u64 = 1 << 12;

/// Coarse sup-norm distance map: cell Chebyshev distance to the nearest
/// occupied cell.
#[derive(Debug, Clone)]
struct DistanceGrid {
    h: i32,
    origin: [i32; MAX_DIM],
    n: [i32; MAX_DIM],
    dist: Vec<u8>,
}

impl DistanceGrid {
    fn build(a: &RangeSet, lo: &[i32; MAX_DIM], hi: &[i32; MAX_DIM]) -> Self {
        let d = a.dim().get();
        let mut h = 1i32;
        let shape = |h: i32| -> ([i32; MAX_DIM], usize) {
            let mut n = [1i32; MAX_DIM];
            let mut total = 1usize;
            for ax in 0..d {
                n[ax] = (hi[ax] - lo[ax] + 1 + h - 1) / h + 2 * GRID_MARGIN;
                total = total.saturating_mul(n[ax] as usize);
            }
            (n, total)
        };
        while shape(h).1 > MAX_GRID_CELLS {
            h *= 2;
        }
        let (n, total) = shape(h);
        let mut origin = [0i32; MAX_DIM];
        for ax in 0..d {
            origin[ax] = lo[ax] - GRID_MARGIN * h;
        }
        let mut grid = Self {
            h,
            origin,
            n,
            dist: vec![u8::MAX; total],
        };
        let mut queue = std::collections::VecDeque::new();
        for s in a.sites() {
            let idx = grid.index(s, d).expect("set inside its own grid");
            if grid.dist[idx] != 0 {
                grid.dist[idx] = 0;
                queue.push_back(idx);
            }
        }
        let neighbors: Vec<[i32; MAX_DIM]> = (0..3usize.pow(d as u32))
            .map(|mut k| {
                let mut o = [0i32; MAX_DIM];
                for item in o.iter_mut().take(d) {
                    *item = (k % 3) as i32 - 1;
                    k /= 3;
                }
                o
            })
            .filter(|o| o.iter().any(|&v| v != 0))
            .collect();
        while let Some(idx) = queue.pop_front() {
            let here = grid.dist[idx];
            if here == u8::MAX - 1 {
                continue;
            }
            let mut c = [0i32; MAX_DIM];
            let mut rest = idx;
            for ax in 0..d {
                c[ax] = (rest % n[ax] as usize) as i32;
                rest /= n[ax] as usize;
            }
            'nb: for o in &neighbors {
                let mut j = 0usize;
                let mut stride = 1usize;
                for ax in 0..d {
                    let v = c[ax] + o[ax];
                    if v < 0 || v >= n[ax] {
                        continue 'nb;
                    }
                    j += v as usize * stride;
                    stride *= n[ax] as usize;
                }
                if grid.dist[j] == u8::MAX {
                    grid.dist[j] = here + 1;
                    queue.push_back(j);
                }
            }
        }
        grid
    }

    fn index(&self, x: &Site, d: usize) -> Option<usize> {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for ax in 0..d {
            let c = (x.0[ax] - self.origin[ax]).div_euclid(self.h);
            if c < 0 || c >= self.n[ax] {
                return None;
            }
            idx += c as usize * stride;
            stride *= self.n[ax] as usize;
        }
        Some(idx)
    }

    /// Lower bound on the sup-distance from `x` to the set, `None` outside the grid.
    fn lower_bound(&self, x: &Site, d: usize) -> Option<i64> {
        let m = self.dist[self.index(x, d)?] as i64;
        Some(if m == 0 { 0 } else { (m - 1) * self.h as i64 + 1 })
    }
}

/// Escape/hitting kernel bound to one target set.
#[derive(Debug, Clone)]
pub struct EscapeKernel<'a> {
    set: &'a RangeSet,
    d: usize,
    lo: [i32; MAX_DIM],
    hi: [i32; MAX_DIM],
    grid: Option<DistanceGrid>,
    cubes: &'static CubeExitTables,
}

impl<'a> EscapeKernel<'a> {
    pub fn new(set: &'a RangeSet) -> Self {
        let d = set.dim().get();
        let mut lo = [0i32; MAX_DIM];
        let mut hi = [0i32; MAX_DIM];
        if let Some(first) = set.sites().first() {
            lo = first.0;
            hi = first.0;
            for s in set.sites() {
                for ax in 0..d {
                    lo[ax] = lo[ax].min(s.0[ax]);
                    hi[ax] = hi[ax].max(s.0[ax]);
                }
            }
        }
        let grid = (set.count() > 1).then(|| DistanceGrid::build(set, &lo, &hi));
        Self {
            set,
            d,
            lo,
            hi,
            grid,
            cubes: CubeExitTables::shared(set.dim()),
        }
    }

    pub fn set(&self) -> &RangeSet {
        self.set
    }

    fn lower_distance(&self, x: &Site) -> i64 {
        let mut box_d = i64::MIN;
        for ax in 0..self.d {
            let v = x.0[ax] as i64;
            box_d = box_d.max(self.lo[ax] as i64 - v).max(v - self.hi[ax] as i64);
        }
        let grid_d = self
            .grid
            .as_ref()
            .and_then(|g| g.lower_bound(x, self.d))
            .unwrap_or(0);
        box_d.max(grid_d).max(1)
    }

    #[inline]
    fn step<R: Rng + ?Sized>(&self, x: &mut Site, rng: &mut R) {
        let r = rng.random_range(0..2 * self.d);
        x.0[r >> 1] += if r & 1 == 0 { 1 } else { -1 };
    }

    /// Walk from `x` (not in the set) until it hits the set (`false`) or is
    /// seen outside `Ball(r_kill)` (`true`).
    pub fn escapes_from<R: Rng + ?Sized>(&self, start: Site, r_kill: f64, rng: &mut R) -> bool {
        if self.set.is_empty() {
            return true;
        }
        let r2 = r_kill * r_kill;
        let mut x = start;
        loop {
            if x.norm_sq() as f64 > r2 {
                return true;
            }
            match self.cubes.for_distance(self.lower_distance(&x)) {
                Some(law) => {
                    let z = law.sample(self.d, rng);
                    x = x.add(z);
                }
                None => {
                    self.step(&mut x, rng);
                    if self.set.contains(x) {
                        return false;
                    }
                }
            }
        }
    }

    /// Walk from a site of the set, counting returns at times `>= 1` only.
    pub fn escapes_after_leaving<R: Rng + ?Sized>(&self, start: Site, r_kill: f64, rng: &mut R) -> bool {
        let mut x = start;
        self.step(&mut x, rng);
        if self.set.contains(x) {
            return false;
        }
        self.escapes_from(x, r_kill, rng)
    }
}

/// Number of successes over `reps` trials, split into fixed chunks with their
/// own ChaCha streams so the count does not depend on the thread count.
pub(crate) fn count_successes<F>(reps: u64, seed: u64, trial: F) -> u64
where
    F: Fn(&mut ChaCha8Rng) -> bool + Sync,
{
    let chunks = reps.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let len = CHUNK.min(reps - c * CHUNK);
            (0..len).filter(|_| trial(&mut rng)).count() as u64
        })
        .sum()
}

pub(crate) fn fresh_seed<R: RngCore + ?Sized>(rng: &mut R) -> u64 {
    rng.next_u64()
}
