//! Plane trees, Lukasiewicz paths, conditioned Galton–Watson trees and spine forests.

mod offspring;
mod spine;
mod tree;

pub use offspring::{OffspringDistribution, OffspringPreset};
pub use spine::{sample_spine_forest, ForestParent, ForestVertex, SpineForest, SpineModel};
pub use tree::{
    conditioned_law, contour_walk, cycle_lemma_rotate, decode, encode, enumerate_plane_trees,
    height_process, sample_conditioned_tree, sample_conditioned_tree_with_budget, LukasiewiczPath,
    PlaneTree, DEFAULT_RETRY_BUDGET, NO_PARENT,
};
