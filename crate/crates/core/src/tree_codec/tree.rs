//! Plane trees, their Lukasiewicz coding, and size-conditioned sampling.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};

use super::offspring::OffspringDistribution;

pub const DEFAULT_RETRY_BUDGET: u64 = 1_000_000;
pub const NO_PARENT: u32 = u32::MAX;

/// Steps `c(u_k) - 1` of a tree (or forest) in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LukasiewiczPath {
    steps: Vec<i32>,
}

impl LukasiewiczPath {
    pub fn new(steps: Vec<i32>) -> Result<Self> {
        if let Some(k) = steps.iter().position(|&s| s < -1) {
            return Err(Error::Codec(format!("step {k} is {} < -1", steps[k])));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[i32] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Partial sums `L_0 = 0, L_k = Σ_{i<k} step_i`, length `len + 1`.
    pub fn partial_sums(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        let mut l = 0i64;
        out.push(0);
        for &s in &self.steps {
            l += s as i64;
            out.push(l);
        }
        out
    }

    /// True when the path codes exactly one tree: `L_k >= 0` before the end and `L_len = -1`.
    pub fn is_excursion(&self) -> bool {
        let l = self.partial_sums();
        let n = self.steps.len();
        n > 0 && l[n] == -1 && l[1..n].iter().all(|&v| v >= 0)
    }

    /// Newline-delimited children counts, the tree export format.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.steps.len() * 2);
        for &x in &self.steps {
            writeln!(s, "{}", x + 1).expect("writing to a String");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut steps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let c: u32 = line
                .parse()
                .map_err(|_| Error::Codec(format!("line {}: '{line}' is not a children count", i + 1)))?;
            steps.push(c as i32 - 1);
        }
        Self::new(steps)
    }
}

/// A rooted ordered tree with vertices indexed in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlaneTree {
    parent: Vec<u32>,
    children_counts: Vec<u32>,
    depth: Vec<u32>,
}

impl PlaneTree {
    pub fn single_vertex() -> Self {
        Self {
            parent: vec![NO_PARENT],
            children_counts: vec![0],
            depth: vec![0],
        }
    }

    pub fn size(&self) -> usize {
        self.parent.len()
    }

    /// Parent of `u_k`, `None` for the root.
    pub fn parent(&self, k: usize) -> Option<usize> {
        match self.parent[k] {
            NO_PARENT => None,
            p => Some(p as usize),
        }
    }

    pub fn parents(&self) -> &[u32] {
        &self.parent
    }

    pub fn children_counts(&self) -> &[u32] {
        &self.children_counts
    }

    pub fn depths(&self) -> &[u32] {
        &self.depth
    }

    pub fn height(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Children of every vertex, in order.
    pub fn children(&self) -> Vec<Vec<u32>> {
        let mut out: Vec<Vec<u32>> = self
            .children_counts
            .iter()
            .map(|&c| Vec::with_capacity(c as usize))
            .collect();
        for (k, &p) in self.parent.iter().enumerate().skip(1) {
            out[p as usize].push(k as u32);
        }
        out
    }
}

pub fn encode(tree: &PlaneTree) -> LukasiewiczPath {
    LukasiewiczPath {
        steps: tree.children_counts.iter().map(|&c| c as i32 - 1).collect(),
    }
}

pub fn decode(path: &LukasiewiczPath) -> Result<PlaneTree> {
    let n = path.len();
    if n == 0 {
        return Err(Error::Codec("empty path".into()));
    }
    let mut parent = Vec::with_capacity(n);
    let mut children_counts = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(n);
    // (vertex, children still to place)
    let mut open: Vec<(u32, u32)> = Vec::new();
    for (k, &step) in path.steps.iter().enumerate() {
        if k == 0 {
            parent.push(NO_PARENT);
            depth.push(0);
        } else {
            let top = open
                .last_mut()
                .ok_or_else(|| Error::Codec(format!("partial sum turns negative before step {k}")))?;
            top.1 -= 1;
            let p = top.0;
            if top.1 == 0 {
                open.pop();
            }
            parent.push(p);
            depth.push(depth[p as usize] + 1);
        }
        let c = (step + 1) as u32;
        children_counts.push(c);
        if c > 0 {
            open.push((k as u32, c));
        }
    }
    if !open.is_empty() {
        return Err(Error::Codec("path ends before every child is placed".into()));
    }
    Ok(PlaneTree {
        parent,
        children_counts,
        depth,
    })
}

/// `H_k = #{i < k : L_i = min_{i <= j <= k} L_j}`, one entry per step.
pub fn height_process(path: &LukasiewiczPath) -> Vec<u32> {
    heights_from_steps(path.steps())
}

pub(crate) fn heights_from_steps(steps: &[i32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(steps.len());
    // indices i < k whose value is a minimum of L over [i, k - 1], values nondecreasing
    let mut stack: Vec<i64> = Vec::new();
    let mut l = 0i64;
    for &s in steps {
        while stack.last().is_some_and(|&top| top > l) {
            stack.pop();
        }
        out.push(stack.len() as u32);
        stack.push(l);
        l += s as i64;
    }
    out
}

/// Depth-first boundary traversal; `2(n-1)+1` entries starting and ending at the root.
pub fn contour_walk(tree: &PlaneTree) -> Vec<u32> {
    let children = tree.children();
    let mut out = Vec::with_capacity(2 * tree.size() - 1);
    // (vertex, index of the next child to visit)
    let mut stack: Vec<(u32, usize)> = vec![(0, 0)];
    out.push(0);
    while let Some(top) = stack.last_mut() {
        let (v, next) = *top;
        if let Some(&c) = children[v as usize].get(next) {
            top.1 += 1;
            out.push(c);
            stack.push((c, 0));
        } else {
            stack.pop();
            if let Some(&(p, _)) = stack.last() {
                out.push(p);
            }
        }
    }
    out
}

/// Rotate a step sequence summing to `-1` into its unique excursion shift.
pub fn cycle_lemma_rotate(steps: &mut [i32]) {
    let mut l = 0i64;
    let mut min = i64::MAX;
    let mut arg = 0;
    for (j, &s) in steps.iter().enumerate() {
        l += s as i64;
        if l < min {
            min = l;
            arg = j + 1;
        }
    }
    debug_assert_eq!(l, -1);
    steps.rotate_left(arg % steps.len());
}

/// Exact sampler of a Galton–Watson tree conditioned to have `n` vertices.
pub fn sample_conditioned_tree<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    n: usize,
    rng: &mut R,
) -> Result<PlaneTree> {
    sample_conditioned_tree_with_budget(dist, n, DEFAULT_RETRY_BUDGET, rng)
}

pub fn sample_conditioned_tree_with_budget<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    n: usize,
    budget: u64,
    rng: &mut R,
) -> Result<PlaneTree> {
    dist.check_admissible(n as u64)?;
    if n == 1 {
        return Ok(PlaneTree::single_vertex());
    }
    let target = (n - 1) as u64;
    let mut counts = vec![0i32; n];
    for _ in 0..budget {
        let mut sum = 0u64;
        let mut ok = true;
        for c in counts.iter_mut() {
            let x = dist.sample(rng);
            sum += x as u64;
            *c = x as i32 - 1;
            // overshoot cannot be undone: abandon this attempt early
            if sum > target {
                ok = false;
                break;
            }
        }
        if ok && sum == target {
            cycle_lemma_rotate(&mut counts);
            return decode(&LukasiewiczPath { steps: counts });
        }
    }
    Err(Error::SamplingBudget(budget))
}

/// Every plane tree with `n` vertices, as Lukasiewicz paths in lexicographic order.
pub fn enumerate_plane_trees(n: usize) -> Vec<LukasiewiczPath> {
    fn extend(prefix: &mut Vec<i32>, level: i64, n: usize, out: &mut Vec<LukasiewiczPath>) {
        let k = prefix.len();
        if k == n {
            if level == -1 {
                out.push(LukasiewiczPath {
                    steps: prefix.clone(),
                });
            }
            return;
        }
        let remaining = (n - k) as i64;
        // reaching -1 at the end needs level + step - (remaining - 1) <= -1
        for s in -1..=(remaining - 2 - level).max(-1) {
            let next = level + s;
            if next < 0 && k + 1 < n {
                continue;
            }
            prefix.push(s as i32);
            extend(prefix, next, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        extend(&mut Vec::with_capacity(n), 0, n, &mut out);
    }
    out
}

/// Conditional law of a size-`n` Galton–Watson tree over the enumerated trees:
/// `Π_v p_{c(v)}` normalized.
pub fn conditioned_law(dist: &OffspringDistribution, n: usize) -> Vec<(LukasiewiczPath, f64)> {
    let trees = enumerate_plane_trees(n);
    let weights: Vec<f64> = trees
        .iter()
        .map(|t| t.steps().iter().map(|&s| dist.pmf((s + 1) as usize)).product())
        .collect();
    let total: f64 = weights.iter().sum();
    trees
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w > 0.0)
        .map(|(t, w)| (t, w / total))
        .collect()
}
