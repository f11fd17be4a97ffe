//! Exact MAP inference on loopy graphs: min-fill triangulation followed by
//! max-sum message passing on the resulting clique tree.

mod clique_tree;
mod triangulate;

pub use clique_tree::{
    build_clique_tree, calibrate, clique_size, map_clique_tree, map_clique_tree_with_budget,
    Calibration, CliqueTree, TreeEdge, DEFAULT_TABLE_BUDGET,
};
pub use triangulate::{triangulate_minfill, EliminationOrder};
