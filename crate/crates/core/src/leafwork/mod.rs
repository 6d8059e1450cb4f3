//! Leaves, center plaques and the intersection problems between them.

pub mod flow;
pub mod leaf;
pub mod plaque;
pub mod relations;

pub use flow::{csu_solve, flow, flow_path, Csu, SolverOpts};
pub use leaf::{
    grow_leaf, grow_stable_local, grow_unstable_leaf, GrowOpts, LeafKind, LeafSegment, Node,
};
pub use plaque::{center_plaque, signed_center_dist, CenterPlaque};
pub use relations::{
    holonomy_uu, leaf_point, path_decompose, suus_relate, transport_uu, HolonomyImage,
    PathDecomposition, SuusWitness,
};
