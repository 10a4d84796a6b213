//! Connectivity masks for the dendritic architectures and the dense
//! baseline, plus trainable-parameter accounting.
//!
//! A dendritic network has three weight layers:
//!
//! | layer | shape                  | mask                                   |
//! |-------|------------------------|----------------------------------------|
//! | 0     | dendrites × inputs     | synaptic (random / LRF / GRF sampling) |
//! | 1     | somas × dendrites      | cable (block diagonal)                 |
//! | 2     | classes × somas        | dense                                  |
//!
//! Dendrite `d` belongs to soma `d / dendrites_per_soma`.

mod builders;
mod mask;
mod spec;

pub use builders::{
    build_masks, cable_mask, count_parameters, grf_mask, grf_window_top_left, lrf_mask, random_mask, window_side,
};
pub use mask::{ConnectivityMask, MaskHeader, SparsePattern};
pub use spec::{ArchitectureKind, ArchitectureSpec};
