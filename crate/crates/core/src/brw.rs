//! Branching random walks indexed by plane trees and spine forests.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::lattice::{new_site_set, Dim, Site, SiteSet, MAX_DIM};
use crate::tree_codec::{
    contour_walk, sample_spine_forest, ForestParent, OffspringDistribution, PlaneTree,
    SpineForest, SpineModel,
};

const RANGE_MAGIC: &[u8; 4] = b"RNGE";
const RANGE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepPreset {
    /// Uniform on `{±e_1, ..., ±e_d}`.
    Srw,
    /// Point mass at the origin; only useful as a test fixture.
    Zero,
}

impl StepPreset {
    pub fn name(self) -> &'static str {
        match self {
            StepPreset::Srw => "srw",
            StepPreset::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "srw" => Ok(StepPreset::Srw),
            "zero" => Ok(StepPreset::Zero),
            other => Err(Error::Domain(format!("unknown step preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
enum StepSampler {
    Srw,
    Zero,
    Alias(WeightedAliasIndex<f64>),
}

/// Symmetric, finitely supported displacement law θ on Z^d.
#[derive(Debug, Clone)]
pub struct StepDistribution {
    dim: Dim,
    atoms: Vec<(Site, f64)>,
    symmetric: bool,
    preset_name: String,
    sampler: StepSampler,
}

impl StepDistribution {
    pub fn preset(preset: StepPreset, dim: Dim) -> Self {
        match preset {
            StepPreset::Srw => {
                let p = 1.0 / (2 * dim.get()) as f64;
                let atoms = (0..dim.get())
                    .flat_map(|a| [(Site::axis(a, 1), p), (Site::axis(a, -1), p)])
                    .collect();
                Self {
                    dim,
                    atoms,
                    symmetric: true,
                    preset_name: preset.name().into(),
                    sampler: StepSampler::Srw,
                }
            }
            StepPreset::Zero => Self {
                dim,
                atoms: vec![(Site::ORIGIN, 1.0)],
                symmetric: true,
                preset_name: preset.name().into(),
                sampler: StepSampler::Zero,
            },
        }
    }

    pub fn srw(dim: Dim) -> Self {
        Self::preset(StepPreset::Srw, dim)
    }

    pub fn zero(dim: Dim) -> Self {
        Self::preset(StepPreset::Zero, dim)
    }

    /// A custom law; it must be symmetric and sum to one.
    pub fn from_atoms(name: &str, dim: Dim, atoms: Vec<(Site, f64)>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 || atoms.iter().any(|a| !(a.1 >= 0.0)) {
            return Err(Error::Distribution(format!("step masses sum to {total}, not 1")));
        }
        for &(v, p) in &atoms {
            if v.0[dim.get()..].iter().any(|&c| c != 0) {
                return Err(Error::Distribution(format!("atom {v:?} has coordinates beyond d = {dim}")));
            }
            let mirrored = atoms.iter().any(|&(w, q)| w == v.neg() && (q - p).abs() <= 1e-15);
            if !mirrored {
                return Err(Error::Distribution(format!("atom {v:?} has no symmetric partner")));
            }
        }
        let sampler = WeightedAliasIndex::new(atoms.iter().map(|a| a.1).collect())
            .map_err(|e| Error::Distribution(format!("alias table: {e}")))?;
        Ok(Self {
            dim,
            atoms,
            symmetric: true,
            preset_name: name.into(),
            sampler: StepSampler::Alias(sampler),
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn atoms(&self) -> &[(Site, f64)] {
        &self.atoms
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn preset_name(&self) -> &str {
        &self.preset_name
    }

    pub fn is_atom(&self, v: Site) -> bool {
        self.atoms.iter().any(|a| a.0 == v && a.1 > 0.0)
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        match &self.sampler {
            StepSampler::Srw => {
                let d = self.dim.get() as u32;
                let r = rng.random_range(0..2 * d);
                Site::axis((r >> 1) as usize, if r & 1 == 0 { 1 } else { -1 })
            }
            StepSampler::Zero => Site::ORIGIN,
            StepSampler::Alias(t) => self.atoms[t.sample(rng)].0,
        }
    }

    /// Covariance matrix of one step, row-major `d × d`.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim.get();
        let mut c = vec![0.0; d * d];
        for &(v, p) in &self.atoms {
            for i in 0..d {
                for j in 0..d {
                    c[i * d + j] += p * v.0[i] as f64 * v.0[j] as f64;
                }
            }
        }
        c
    }

    /// Symmetric square root of the covariance, row-major.
    pub fn sigma_theta(&self) -> Vec<f64> {
        let d = self.dim.get();
        let (vals, vecs) = symmetric_eigen(self.covariance(), d);
        let mut out = vec![0.0; d * d];
        for k in 0..d {
            let s = vals[k].max(0.0).sqrt();
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] += s * vecs[i * d + k] * vecs[j * d + k];
                }
            }
        }
        out
    }

    /// Whether the support generates Z^d as a group.
    pub fn generates_lattice(&self) -> bool {
        let d = self.dim.get();
        let rows: Vec<Vec<i64>> = self
            .atoms
            .iter()
            .filter(|a| a.1 > 0.0)
            .map(|a| a.0 .0[..d].iter().map(|&c| c as i64).collect())
            .collect();
        lattice_index_is_one(rows, d)
    }
}

/// Cyclic Jacobi eigen-decomposition of a small symmetric matrix; eigenvectors in columns.
fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// Integer row reduction: does the row lattice equal Z^d?
fn lattice_index_is_one(mut rows: Vec<Vec<i64>>, d: usize) -> bool {
    let mut pivot_row = 0;
    for col in 0..d {
        // Euclid on column `col` among rows pivot_row..
        loop {
            let nonzero: Vec<usize> = (pivot_row..rows.len()).filter(|&r| rows[r][col] != 0).collect();
            if nonzero.is_empty() {
                return false;
            }
            let best = *nonzero
                .iter()
                .min_by_key(|&&r| rows[r][col].abs())
                .expect("nonempty");
            rows.swap(pivot_row, best);
            let mut done = true;
            for r in pivot_row + 1..rows.len() {
                let f = rows[r][col] / rows[pivot_row][col];
                if f != 0 {
                    for c in 0..d {
                        rows[r][c] -= f * rows[pivot_row][c];
                    }
                }
                if rows[r][col] != 0 {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
        if rows[pivot_row][col].abs() != 1 {
            return false;
        }
        pivot_row += 1;
    }
    true
}

/// The index set carrying the walk.
#[derive(Debug, Clone)]
pub enum Genealogy {
    Tree(PlaneTree),
    Forest(SpineForest),
}

impl From<PlaneTree> for Genealogy {
    fn from(t: PlaneTree) -> Self {
        Genealogy::Tree(t)
    }
}

impl From<SpineForest> for Genealogy {
    fn from(f: SpineForest) -> Self {
        Genealogy::Forest(f)
    }
}

/// Positions `V(u_k)` of every explored vertex, root at the origin.
#[derive(Debug, Clone)]
pub struct BranchingWalk {
    dim: Dim,
    genealogy: Genealogy,
    positions: Vec<Site>,
    /// `V(∅_k)` for forests, empty for trees.
    spine_positions: Vec<Site>,
}

impl BranchingWalk {
    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn genealogy(&self) -> &Genealogy {
        &self.genealogy
    }

    pub fn tree(&self) -> Option<&PlaneTree> {
        match &self.genealogy {
            Genealogy::Tree(t) => Some(t),
            Genealogy::Forest(_) => None,
        }
    }

    pub fn positions(&self) -> &[Site] {
        &self.positions
    }

    pub fn spine_positions(&self) -> &[Site] {
        &self.spine_positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Every parent-to-child displacement is an atom of θ.
    pub fn check_edges(&self, theta: &StepDistribution) -> bool {
        match &self.genealogy {
            Genealogy::Tree(t) => (1..t.size()).all(|k| {
                let p = t.parents()[k] as usize;
                theta.is_atom(self.positions[k].sub(self.positions[p]))
            }),
            Genealogy::Forest(f) => {
                let spine_ok = self
                    .spine_positions
                    .windows(2)
                    .all(|w| theta.is_atom(w[1].sub(w[0])));
                let explored_ok = f.exploration().iter().enumerate().all(|(k, v)| {
                    let parent = match v.parent {
                        ForestParent::Root => return self.positions[k] == Site::ORIGIN,
                        ForestParent::Explored(p) => self.positions[p as usize],
                        ForestParent::Spine(s) => self.spine_positions[s as usize],
                    };
                    theta.is_atom(self.positions[k].sub(parent))
                });
                spine_ok && explored_ok
            }
        }
    }
}

/// Draw one θ step per edge in exploration order and sum along ancestral lines.
pub fn assign_positions<R: Rng + ?Sized>(
    genealogy: impl Into<Genealogy>,
    theta: &StepDistribution,
    rng: &mut R,
) -> BranchingWalk {
    let genealogy = genealogy.into();
    let mut positions = Vec::new();
    let mut spine_positions = Vec::new();
    match &genealogy {
        Genealogy::Tree(t) => {
            positions.reserve(t.size());
            positions.push(Site::ORIGIN);
            for &p in &t.parents()[1..] {
                let step = theta.sample(rng);
                positions.push(positions[p as usize].add(step));
            }
        }
        Genealogy::Forest(f) => {
            positions.reserve(f.len());
            spine_positions.push(Site::ORIGIN);
            for v in f.exploration() {
                if let Some(k) = v.spine {
                    extend_spine(&mut spine_positions, k as usize, theta, rng);
                    positions.push(spine_positions[k as usize]);
                    continue;
                }
                let base = match v.parent {
                    ForestParent::Root => {
                        positions.push(Site::ORIGIN);
                        continue;
                    }
                    ForestParent::Explored(p) => positions[p as usize],
                    ForestParent::Spine(k) => {
                        extend_spine(&mut spine_positions, k as usize, theta, rng);
                        spine_positions[k as usize]
                    }
                };
                let step = theta.sample(rng);
                positions.push(base.add(step));
            }
        }
    }
    let bw = BranchingWalk {
        dim: theta.dim(),
        genealogy,
        positions,
        spine_positions,
    };
    debug_assert!(bw.check_edges(theta), "edge displacement outside the support of θ");
    bw
}

fn extend_spine<R: Rng + ?Sized>(spine: &mut Vec<Site>, k: usize, theta: &StepDistribution, rng: &mut R) {
    while spine.len() <= k {
        let last = *spine.last().expect("spine starts at the origin");
        spine.push(last.add(theta.sample(rng)));
    }
}

/// The set of visited sites, kept in first-visit order.
#[derive(Debug, Clone)]
pub struct RangeSet {
    dim: Dim,
    sites: Vec<Site>,
    set: SiteSet,
    max_norm: f64,
}

impl RangeSet {
    pub fn from_sites(dim: Dim, iter: impl IntoIterator<Item = Site>) -> Self {
        let iter = iter.into_iter();
        let mut set = new_site_set(iter.size_hint().0);
        let mut sites = Vec::with_capacity(iter.size_hint().0);
        let mut max_sq = 0i64;
        for s in iter {
            if set.insert(s) {
                sites.push(s);
                max_sq = max_sq.max(s.norm_sq());
            }
        }
        Self {
            dim,
            sites,
            set,
            max_norm: (max_sq as f64).sqrt(),
        }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn set(&self) -> &SiteSet {
        &self.set
    }

    pub fn count(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    #[inline]
    pub fn contains(&self, x: Site) -> bool {
        self.set.contains(&x)
    }

    pub fn translate(&self, z: Site) -> Self {
        Self::from_sites(self.dim, self.sites.iter().map(|s| s.add(z)))
    }

    /// Binary export: "RNGE", version, dim, count, then little-endian i32 coordinates.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(RANGE_MAGIC)?;
        w.write_all(&RANGE_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim.get() as u32).to_le_bytes())?;
        w.write_all(&(self.sites.len() as u64).to_le_bytes())?;
        for s in &self.sites {
            for &c in s.coords(self.dim) {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |m: &str| Error::Codec(format!("range stream: {m}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != RANGE_MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != RANGE_VERSION {
            return Err(bad("unsupported version"));
        }
        r.read_exact(&mut b4)?;
        let dim = Dim::new(u32::from_le_bytes(b4) as usize)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        let mut sites = Vec::with_capacity(count);
        let mut c = [0i32; MAX_DIM];
        for _ in 0..count {
            for slot in c.iter_mut().take(dim.get()) {
                r.read_exact(&mut b4)?;
                *slot = i32::from_le_bytes(b4);
            }
            sites.push(Site(c));
        }
        Ok(Self::from_sites(dim, sites))
    }
}

pub fn range(bw: &BranchingWalk) -> RangeSet {
    RangeSet::from_sites(bw.dim, bw.positions.iter().copied())
}

/// The contour-indexed positions scaled by `(n-1)^{-1/4}`.
#[derive(Debug, Clone)]
pub struct Snake {
    pub dim: Dim,
    pub points: Vec<[f64; MAX_DIM]>,
}

impl Snake {
    pub fn max_norm(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.iter().map(|x| x * x).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// CSV with columns `t,x1..xd`, `t` running over `[0, 1]`.
    pub fn to_csv(&self) -> String {
        let d = self.dim.get();
        let mut s = String::from("t");
        for i in 1..=d {
            write!(s, ",x{i}").expect("writing to a String");
        }
        s.push('\n');
        let steps = (self.points.len() - 1).max(1) as f64;
        for (k, p) in self.points.iter().enumerate() {
            write!(s, "{}", k as f64 / steps).expect("writing to a String");
            for x in &p[..d] {
                write!(s, ",{x}").expect("writing to a String");
            }
            s.push('\n');
        }
        s
    }
}

pub fn rescaled_snake(bw: &BranchingWalk) -> Result<Snake> {
    let tree = bw
        .tree()
        .ok_or_else(|| Error::DegenerateTree("the snake needs a finite plane tree".into()))?;
    let n = tree.size();
    if n < 2 {
        return Err(Error::DegenerateTree("the snake needs at least two vertices".into()));
    }
    let scale = ((n - 1) as f64).powf(-0.25);
    let points = contour_walk(tree)
        .into_iter()
        .map(|v| {
            let mut p = [0.0; MAX_DIM];
            for (o, &c) in p.iter_mut().zip(&bw.positions[v as usize].0) {
                *o = scale * c as f64;
            }
            p
        })
        .collect();
    Ok(Snake { dim: bw.dim, points })
}

/// `|V(u*_{i+k}) - V(u*_i)|` and `|V(u*_k)|` on one walk over `T*_∞`.
pub fn witness_pair(bw: &BranchingWalk, k: usize, i: usize) -> Result<(f64, f64)> {
    if bw.len() <= i + k {
        return Err(Error::InsufficientExploration {
            needed: i + k + 1,
            available: bw.len(),
        });
    }
    let p = &bw.positions;
    Ok((p[i + k].sub(p[i]).norm(), p[k].norm()))
}

/// Paired samples of the increment law over `sample_count` independent
/// `T*_∞` forests; each forest contributes to both samples.
pub fn stationarity_witness<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    theta: &StepDistribution,
    k: usize,
    i: usize,
    sample_count: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut shifted = Vec::with_capacity(sample_count);
    let mut base = Vec::with_capacity(sample_count);
    for _ in 0..sample_count {
        let forest = sample_spine_forest(dist, SpineModel::TInfStar, i + k + 1, rng)?;
        let bw = assign_positions(forest, theta, rng);
        let (a, b) = witness_pair(&bw, k, i)?;
        shifted.push(a);
        base.push(b);
    }
    Ok((shifted, base))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree_codec::{decode, sample_conditioned_tree, LukasiewiczPath};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn srw_preset_properties() {
        for dim in Dim::all() {
            let theta = StepDistribution::srw(dim);
            assert!(theta.generates_lattice());
            let d = dim.get();
            let s = theta.sigma_theta();
            for i in 0..d {
                for j in 0..d {
                    let expect = if i == j { (d as f64).powf(-0.5) } else { 0.0 };
                    assert!((s[i * d + j] - expect).abs() < 1e-12);
                }
            }
        }
        assert!(!StepDistribution::zero(Dim::D3).generates_lattice());
    }

    #[test]
    fn custom_laws_are_validated() {
        let e = |a, k| Site::axis(a, k);
        let lopsided = vec![(e(0, 1), 0.5), (e(1, 1), 0.5)];
        assert!(StepDistribution::from_atoms("x", Dim::D3, lopsided).is_err());
        // {±2e_i} generates only 2Z^3
        let even: Vec<_> = (0..3).flat_map(|a| [(e(a, 2), 1.0 / 6.0), (e(a, -2), 1.0 / 6.0)]).collect();
        let t = StepDistribution::from_atoms("even", Dim::D3, even).unwrap();
        assert!(!t.generates_lattice());
        // diagonal steps with an axis step generate Z^3
        let mut mixed = vec![];
        for v in [[1, 1, 0], [1, 0, 0], [0, 1, 1]] {
            mixed.push((Site::from_slice(&v), 1.0 / 6.0));
            mixed.push((Site::from_slice(&v).neg(), 1.0 / 6.0));
        }
        let t = StepDistribution::from_atoms("mixed", Dim::D3, mixed).unwrap();
        assert!(t.generates_lattice());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert!(t.is_atom(t.sample(&mut rng)));
        }
    }

    #[test]
    fn single_vertex_and_zero_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bw = assign_positions(PlaneTree::single_vertex(), &StepDistribution::srw(Dim::D3), &mut rng);
        assert_eq!(bw.positions(), &[Site::ORIGIN]);
        let r = range(&bw);
        assert_eq!(r.count(), 1);
        assert!(rescaled_snake(&bw).is_err());

        let cherry = decode(&LukasiewiczPath::new(vec![1, -1, -1]).unwrap()).unwrap();
        let bw = assign_positions(cherry, &StepDistribution::zero(Dim::D4), &mut rng);
        let snake = rescaled_snake(&bw).unwrap();
        assert_eq!(snake.points.len(), 5);
        assert!(snake.points.iter().all(|p| p.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn path_tree_is_a_random_walk() {
        // a path with k edges: root -> 1 -> ... -> k
        let k = 16;
        let mut steps = vec![0; k];
        steps.push(-1);
        let path_tree = decode(&LukasiewiczPath::new(steps).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let theta = StepDistribution::srw(Dim::D3);
        let reps = 10_000;
        let msd: f64 = (0..reps)
            .map(|_| {
                let bw = assign_positions(path_tree.clone(), &theta, &mut rng);
                bw.positions()[k].norm_sq() as f64
            })
            .sum::<f64>()
            / reps as f64;
        assert!((msd / k as f64 - 1.0).abs() < 0.05, "{msd}");
    }

    #[test]
    fn range_and_snake_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dist = OffspringDistribution::geometric();
        let theta = StepDistribution::srw(Dim::D5);
        let t = sample_conditioned_tree(&dist, 300, &mut rng).unwrap();
        let bw = assign_positions(t, &theta, &mut rng);
        assert!(bw.check_edges(&theta));
        let r = range(&bw);
        assert!(r.count() <= 300 && r.contains(Site::ORIGIN));
        let direct = bw.positions().iter().map(|p| p.norm()).fold(0.0, f64::max);
        assert_eq!(r.max_norm(), direct);
        let snake = rescaled_snake(&bw).unwrap();
        assert_eq!(snake.points.len(), 2 * 299 + 1);
        assert!((snake.max_norm() - 299f64.powf(-0.25) * direct).abs() < 1e-12);
        let csv = snake.to_csv();
        assert!(csv.starts_with("t,x1,x2,x3,x4,x5\n0,"));
        assert_eq!(csv.lines().count(), 2 * 299 + 2);

        let mut buf = Vec::new();
        r.write_to(&mut buf).unwrap();
        let back = RangeSet::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.sites(), r.sites());
        buf[0] = b'X';
        assert!(RangeSet::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn forests_get_consistent_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dist = OffspringDistribution::geometric();
        let theta = StepDistribution::srw(Dim::D3);
        for model in [SpineModel::TInf, SpineModel::TInfStar] {
            let f = sample_spine_forest(&dist, model, 400, &mut rng).unwrap();
            let bw = assign_positions(f, &theta, &mut rng);
            assert!(bw.check_edges(&theta));
            assert_eq!(bw.positions()[0], Site::ORIGIN);
        }
    }

    #[test]
    fn witness_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dist = OffspringDistribution::geometric();
        let theta = StepDistribution::srw(Dim::D3);
        let (a, b) = stationarity_witness(&dist, &theta, 30, 0, 50, &mut rng).unwrap();
        assert_eq!(a, b);
        let (a, b) = stationarity_witness(&dist, &theta, 0, 30, 50, &mut rng).unwrap();
        assert!(a.iter().chain(&b).all(|&x| x == 0.0));
        let f = sample_spine_forest(&dist, SpineModel::TInfStar, 5, &mut rng).unwrap();
        let short = assign_positions(f, &theta, &mut rng);
        assert!(matches!(
            witness_pair(&short, 100, 100),
            Err(Error::InsufficientExploration { needed: 201, .. })
        ));
    }

    #[test]
    fn positions_are_deterministic() {
        let dist = OffspringDistribution::geometric();
        let theta = StepDistribution::srw(Dim::D4);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = sample_conditioned_tree(&dist, 200, &mut rng).unwrap();
            assign_positions(t, &theta, &mut rng).positions().to_vec()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }
}
