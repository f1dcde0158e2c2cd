//! Exit law of simple random walk from the centre of a lattice cube.
//!
//! For `Q_L = {|z|_∞ ≤ L}` the walk started at 0 leaves through `z` with
//! `|z_a| = L + 1` with probability `G_Q(0, z ∓ e_a) / 2d`, where `G_Q` is the
//! Green function killed outside `Q_L`. `G_Q` is diagonal in products of
//! Dirichlet sine modes, so its face values are a `d`-fold spectral sum that
//! separates axis by axis.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::lattice::{Dim, Site, MAX_DIM};

/// Largest tabulated half-width per dimension.
fn max_half_width(d: usize) -> u32 {
    match d {
        3 => 256,
        4 => 64,
        _ => 32,
    }
}

fn scales(d: usize) -> Vec<u32> {
    let top = max_half_width(d);
    let mut out: Vec<u32> = (1..=16).collect();
    let mut l = 16f64;
    loop {
        l *= 1.25;
        let li = l.round() as u32;
        if li >= top {
            break;
        }
        out.push(li);
    }
    out.push(top);
    out
}

/// Exit law from one cube: classes of exit points up to signed permutations.
#[derive(Debug)]
pub struct CubeExitLaw {
    half_width: u32,
    classes: Vec<[u32; MAX_DIM]>,
    probs: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl CubeExitLaw {
    pub fn new(dim: Dim, half_width: u32) -> Self {
        let d = dim.get();
        let l = half_width as usize;
        let n = l + 1;
        let face = face_green(d, l);
        let mut classes = Vec::new();
        let mut probs = Vec::new();
        let mut tuple = vec![0usize; d - 1];
        loop {
            let mut idx = 0usize;
            for &t in tuple.iter().rev() {
                idx = idx * n + t;
            }
            let h = face[idx] / (2 * d) as f64;
            let mut class = [0u32; MAX_DIM];
            class[0] = half_width + 1;
            for (k, &t) in tuple.iter().enumerate() {
                class[k + 1] = t as u32;
            }
            classes.push(class);
            probs.push(h * orbit_size(&class[..d]) as f64);
            // next nondecreasing tuple with entries <= l
            let mut k = d - 1;
            loop {
                if k == 0 {
                    let alias = WeightedAliasIndex::new(probs.clone()).expect("positive exit law");
                    return Self {
                        half_width,
                        classes,
                        probs,
                        alias,
                    };
                }
                k -= 1;
                if tuple[k] < l {
                    tuple[k] += 1;
                    let v = tuple[k];
                    for t in tuple.iter_mut().skip(k + 1) {
                        *t = v;
                    }
                    break;
                }
            }
        }
    }

    pub fn half_width(&self) -> u32 {
        self.half_width
    }

    /// Total exit probability; equals 1 up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability of leaving through the point `z`.
    pub fn probability(&self, dim: Dim, z: Site) -> f64 {
        let d = dim.get();
        let key = z.canonical(dim);
        if key[d - 1] != self.half_width + 1 || (d > 1 && key[d - 2] > self.half_width) {
            return 0.0;
        }
        let mut class = [0u32; MAX_DIM];
        class[0] = key[d - 1];
        class[1..d].copy_from_slice(&key[..d - 1]);
        match self.classes.iter().position(|c| c[..d] == class[..d]) {
            Some(i) => self.probs[i] / orbit_size(&class[..d]) as f64,
            None => 0.0,
        }
    }

    /// Exit displacement of one excursion from the centre.
    pub fn sample<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Site {
        let class = &self.classes[self.alias.sample(rng)];
        let mut v = [0i32; MAX_DIM];
        for k in 0..d {
            v[k] = class[k] as i32;
        }
        for k in (1..d).rev() {
            let j = rng.random_range(0..=k);
            v.swap(k, j);
        }
        let signs = rng.next_u32();
        for (k, item) in v.iter_mut().enumerate().take(d) {
            if signs >> k & 1 == 1 {
                *item = -*item;
            }
        }
        Site(v)
    }
}

/// Number of distinct signed permutations of `v`.
fn orbit_size(v: &[u32]) -> u64 {
    let d = v.len();
    let mut fact = [1u64; MAX_DIM + 1];
    for k in 1..=MAX_DIM {
        fact[k] = fact[k - 1] * k as u64;
    }
    let mut sorted = v.to_vec();
    sorted.sort_unstable();
    let mut size = fact[d];
    let mut run = 1;
    for k in 1..=d {
        if k < d && sorted[k] == sorted[k - 1] {
            run += 1;
        } else {
            size /= fact[run];
            run = 1;
        }
    }
    size << v.iter().filter(|&&x| x != 0).count()
}

/// `G_Q(0, y)` on the face `y_1 = L`, for `y_2..y_d ∈ [0, L]`, flattened with
/// `y_2` fastest.
fn face_green(d: usize, l: usize) -> Vec<f64> {
    let n = l + 1;
    let c = (1.0 / n as f64).sqrt();
    let theta: Vec<f64> = (0..n)
        .map(|m| (2 * m + 1) as f64 * std::f64::consts::PI / (2 * n) as f64)
        .collect();
    let cos: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
    let at_centre: Vec<f64> = (0..n).map(|m| if m % 2 == 0 { c } else { -c }).collect();
    let at_face: Vec<f64> = theta.iter().map(|t| c * t.sin()).collect();
    let modes: Vec<f64> = (0..n)
        .flat_map(|m| {
            let k = (2 * m + 1) as f64;
            (0..n).map(move |y| c * (k * (y + n) as f64 * std::f64::consts::PI / (2 * n) as f64).sin())
        })
        .collect();
    let inv_d = 1.0 / d as f64;
    let rest = d - 1;
    let len = n.pow(rest as u32);
    // contract the face axis against the spectral weights
    let mut field = vec![0.0; len];
    let mut ms = vec![0usize; rest];
    for slot in field.iter_mut() {
        let mut w = 1.0;
        let mut cs = 0.0;
        for &m in &ms {
            w *= at_centre[m];
            cs += cos[m];
        }
        let mut acc = 0.0;
        for m1 in 0..n {
            acc += at_centre[m1] * at_face[m1] / (1.0 - inv_d * (cos[m1] + cs));
        }
        *slot = w * acc;
        for m in ms.iter_mut() {
            *m += 1;
            if *m < n {
                break;
            }
            *m = 0;
        }
    }
    // mode index -> coordinate, one axis at a time
    let mut out = vec![0.0; len];
    let mut stride = 1;
    for _ in 0..rest {
        for (o, slot) in out.iter_mut().enumerate() {
            let y = (o / stride) % n;
            let base = o - y * stride;
            let mut acc = 0.0;
            for m in 0..n {
                acc += modes[m * n + y] * field[base + m * stride];
            }
            *slot = acc;
        }
        std::mem::swap(&mut field, &mut out);
        stride *= n;
    }
    field
}

/// All tabulated cube laws for one dimension, smallest first.
#[derive(Debug)]
pub struct CubeExitTables {
    dim: Dim,
    laws: Vec<CubeExitLaw>,
    /// `pick[D]` = index of the largest law with `L <= D - 2`.
    pick: Vec<u16>,
}

impl CubeExitTables {
    pub fn shared(dim: Dim) -> &'static CubeExitTables {
        static CELLS: [OnceLock<CubeExitTables>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        CELLS[dim.get() - 3].get_or_init(|| Self::build(dim))
    }

    fn build(dim: Dim) -> Self {
        let laws: Vec<CubeExitLaw> = scales(dim.get()).into_iter().map(|l| CubeExitLaw::new(dim, l)).collect();
        let top = laws.last().expect("nonempty").half_width as usize;
        let mut pick = vec![0u16; top + 3];
        let mut j = 0;
        for (dist, slot) in pick.iter_mut().enumerate().skip(3) {
            while j + 1 < laws.len() && laws[j + 1].half_width as usize + 2 <= dist {
                j += 1;
            }
            *slot = j as u16;
        }
        Self { dim, laws, pick }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn laws(&self) -> &[CubeExitLaw] {
        &self.laws
    }

    /// Largest law whose cube and exit points stay at sup-distance `< dist`
    /// from the centre's nearest obstacle; `None` when `dist < 3`.
    #[inline]
    pub fn for_distance(&self, dist: i64) -> Option<&CubeExitLaw> {
        if dist < 3 {
            return None;
        }
        let i = (dist as usize).min(self.pick.len() - 1);
        Some(&self.laws[self.pick[i] as usize])
    }
}
