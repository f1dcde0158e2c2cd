pub mod error;
pub mod lattice;
pub mod lattice_green;
pub mod tree_codec;
pub mod brw;
pub mod cap_discrete;
pub mod cap_continuum;
pub mod intersection_lab;
pub mod experiments;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{Dim, Site};
