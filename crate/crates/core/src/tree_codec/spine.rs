//! The spine forests `T_∞` and `T*_∞`, grown lazily in exploration order.
//!
//! Spine vertices `∅_k` get `D_k` extra children with `P(D_k = j) = Σ_{i>j} p_i`,
//! each the root of an independent Galton–Watson tree. The spine child
//! `∅_{k+1}` is the last child of `∅_k`, so depth-first exploration finishes
//! the finite subtrees hanging off `∅_k` before moving up the spine.
//!
//! In `T*_∞` the vertex `∅_0` is itself the root of an ordinary tree
//! (`D_0 := 1`) and the spine vertices `∅_k, k >= 1` are skipped by the
//! exploration.

use rand::Rng;

use crate::error::{Error, Result};

use super::offspring::OffspringDistribution;
use super::tree::heights_from_steps;

/// Spine length at which growth is abandoned; reaching it means the
/// tail law puts almost no mass above zero.
const SPINE_CAP: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpineModel {
    TInf,
    TInfStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestParent {
    Root,
    Explored(u32),
    Spine(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestVertex {
    pub parent: ForestParent,
    pub depth: u32,
    /// Children excluding a spine child.
    pub children: u32,
    /// `Some(k)` when the vertex is `∅_k`.
    pub spine: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct SpineForest {
    model: SpineModel,
    spine_offspring: Vec<u32>,
    spine_positions_in_exploration: Vec<Option<u32>>,
    exploration: Vec<ForestVertex>,
    sigma: Vec<u32>,
    big_sigma: Vec<u64>,
    heights: Vec<u32>,
    steps: Vec<i32>,
}

impl SpineForest {
    pub fn model(&self) -> SpineModel {
        self.model
    }

    /// `D_k` for every spine vertex grown so far.
    pub fn spine_offspring(&self) -> &[u32] {
        &self.spine_offspring
    }

    /// Exploration index of `∅_k`, or `None` if it is not explored.
    pub fn spine_positions_in_exploration(&self) -> &[Option<u32>] {
        &self.spine_positions_in_exploration
    }

    pub fn spine_len(&self) -> usize {
        self.spine_offspring.len()
    }

    pub fn exploration(&self) -> &[ForestVertex] {
        &self.exploration
    }

    pub fn len(&self) -> usize {
        self.exploration.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exploration.is_empty()
    }

    /// `σ_n`: index of the spine vertex whose subtrees contain `u_n`.
    pub fn sigma(&self) -> &[u32] {
        &self.sigma
    }

    /// `Σ_k`: number of tree copies attached up to `∅_k`.
    pub fn big_sigma(&self) -> &[u64] {
        &self.big_sigma
    }

    /// Graph distance from `∅_0`.
    pub fn heights(&self) -> &[u32] {
        &self.heights
    }

    /// Lukasiewicz steps of the explored non-spine vertices, concatenated
    /// over the attached copies.
    pub fn lukasiewicz_steps(&self) -> &[i32] {
        &self.steps
    }

    /// Height process of the concatenated forest coded by `lukasiewicz_steps`.
    pub fn forest_heights(&self) -> Vec<u32> {
        heights_from_steps(&self.steps)
    }

    /// `σ_n = min{k : Σ_k > -min_{i<=n} L_i}`, recomputed from the walk.
    pub fn sigma_from_walk(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.steps.len());
        let mut l = 0i64;
        let mut min = 0i64;
        let mut k = 0usize;
        for &s in &self.steps {
            while self.big_sigma[k] as i64 <= -min {
                k += 1;
            }
            out.push(k as u32);
            l += s as i64;
            min = min.min(l);
        }
        out
    }
}

/// Grow the forest until at least `m` vertices have been explored.
pub fn sample_spine_forest<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    model: SpineModel,
    m: usize,
    rng: &mut R,
) -> Result<SpineForest> {
    if m == 0 {
        return Err(Error::Domain("exploration length must be at least 1".into()));
    }
    let mut f = SpineForest {
        model,
        spine_offspring: Vec::new(),
        spine_positions_in_exploration: Vec::new(),
        exploration: Vec::with_capacity(m),
        sigma: Vec::with_capacity(m),
        big_sigma: Vec::new(),
        heights: Vec::with_capacity(m),
        steps: Vec::with_capacity(m),
    };
    // (parent, remaining non-spine children)
    let mut open: Vec<(ForestParent, u32, u32)> = Vec::new();
    let mut spine_depth = 0u32;

    match model {
        SpineModel::TInfStar => {
            let c = dist.sample(rng);
            push(&mut f, ForestParent::Root, 0, c, None, 0, Some(c));
            f.spine_offspring.push(1);
            f.spine_positions_in_exploration.push(Some(0));
            f.big_sigma.push(1);
            if c > 0 {
                open.push((ForestParent::Explored(0), 0, c));
            }
        }
        SpineModel::TInf => {
            let d0 = dist.sample_tail(rng);
            push(&mut f, ForestParent::Root, 0, d0, Some(0), 0, None);
            f.spine_offspring.push(d0);
            f.spine_positions_in_exploration.push(Some(0));
            f.big_sigma.push(d0 as u64);
            if d0 > 0 {
                open.push((ForestParent::Explored(0), 0, d0));
            }
        }
    }

    while f.exploration.len() < m {
        while open.last().is_some_and(|t| t.2 == 0) {
            open.pop();
        }
        let Some(top) = open.last_mut() else {
            // finite subtrees of the current spine vertex are done: climb the spine
            if f.spine_offspring.len() >= SPINE_CAP {
                return Err(Error::SamplingBudget(SPINE_CAP as u64));
            }
            spine_depth += 1;
            let k = spine_depth;
            let dk = dist.sample_tail(rng);
            f.spine_offspring.push(dk);
            let prev = *f.big_sigma.last().expect("spine is nonempty");
            f.big_sigma.push(prev + dk as u64);
            let spine_parent = match f.spine_positions_in_exploration[k as usize - 1] {
                Some(i) => ForestParent::Explored(i),
                None => ForestParent::Spine(k - 1),
            };
            match model {
                SpineModel::TInf => {
                    let idx = f.exploration.len() as u32;
                    push(&mut f, spine_parent, k, dk, Some(k), k, None);
                    f.spine_positions_in_exploration.push(Some(idx));
                    if dk > 0 {
                        open.push((ForestParent::Explored(idx), k, dk));
                    }
                }
                SpineModel::TInfStar => {
                    f.spine_positions_in_exploration.push(None);
                    if dk > 0 {
                        open.push((ForestParent::Spine(k), k, dk));
                    }
                }
            }
            continue;
        };
        top.2 -= 1;
        let (parent, parent_depth, _) = *top;
        let c = dist.sample(rng);
        let idx = f.exploration.len() as u32;
        push(&mut f, parent, parent_depth + 1, c, None, spine_depth, Some(c));
        if c > 0 {
            open.push((ForestParent::Explored(idx), parent_depth + 1, c));
        }
    }
    Ok(f)
}

fn push(
    f: &mut SpineForest,
    parent: ForestParent,
    depth: u32,
    children: u32,
    spine: Option<u32>,
    sigma: u32,
    luka: Option<u32>,
) {
    f.exploration.push(ForestVertex {
        parent,
        depth,
        children,
        spine,
    });
    f.heights.push(depth);
    f.sigma.push(sigma);
    if let Some(c) = luka {
        f.steps.push(c as i32 - 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn star_height_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for dist in [OffspringDistribution::geometric(), OffspringDistribution::binary()] {
            for _ in 0..50 {
                let f = sample_spine_forest(&dist, SpineModel::TInfStar, 500, &mut rng).unwrap();
                assert!(f.len() >= 500);
                let h = f.forest_heights();
                assert_eq!(f.sigma_from_walk(), f.sigma());
                for n in 0..f.len() {
                    let s = f.sigma()[n];
                    assert_eq!(f.heights()[n], h[n] + s + (s > 0) as u32, "n = {n}");
                }
                assert_eq!(f.big_sigma()[0], 1);
                assert!(f.big_sigma().windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn first_vertex_is_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for model in [SpineModel::TInf, SpineModel::TInfStar] {
            let f = sample_spine_forest(&OffspringDistribution::geometric(), model, 1, &mut rng).unwrap();
            assert_eq!(f.len(), 1);
            assert_eq!(f.exploration()[0].parent, ForestParent::Root);
            assert_eq!(f.heights()[0], 0);
        }
        assert!(sample_spine_forest(&OffspringDistribution::geometric(), SpineModel::TInf, 0, &mut rng).is_err());
    }

    #[test]
    fn t_inf_explores_the_spine_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = sample_spine_forest(&OffspringDistribution::geometric(), SpineModel::TInf, 2000, &mut rng)
            .unwrap();
        let mut last = None;
        for (k, pos) in f.spine_positions_in_exploration().iter().enumerate() {
            let pos = pos.expect("T_inf explores every spine vertex");
            let v = f.exploration()[pos as usize];
            assert_eq!(v.spine, Some(k as u32));
            assert_eq!(v.depth, k as u32);
            if let Some(prev) = last {
                assert!(pos > prev);
                assert_eq!(v.parent, ForestParent::Explored(prev));
            }
            last = Some(pos);
        }
        // every explored parent precedes its child and depths are consistent
        for v in f.exploration() {
            if let ForestParent::Explored(p) = v.parent {
                assert_eq!(f.exploration()[p as usize].depth + 1, v.depth);
            }
        }
    }
}
