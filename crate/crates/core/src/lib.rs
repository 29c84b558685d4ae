//! Gibbs measures on finite graphs, their lifts to random coverings, and
//! Markov chains on regular trees.
//!
//! The numeric kernels are generic over [`Scalar`] (`f64` or `f32`);
//! graphs, colorings and coverings are integer data.

// `!(x > 0)` style guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covering;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod factor;
pub mod gibbs;
pub mod glauber;
pub mod graph;
pub mod info;
pub mod scalar;
pub mod tree;

pub use covering::{
    nice_vertices, niceness_audit, random_covering, seeded_rng, NFoldCovering, NicenessReport,
};
pub use dist::{DistTable, DEFAULT_ENUMERATION_CAP};
pub use error::{Error, Result};
pub use factor::{
    apply_block_code, edge_vertex_slack, empirical_dists, factor_marginals_exact,
    homogeneous_slack, BlockCode, EmpiricalPair, Pattern, Rule,
};
pub use gibbs::{
    brute_force_gibbs, conditional_table, dlr_check, markov_check, transfer_potential, Boundary,
    Potential,
};
pub use glauber::{glauber_sample, GlauberChain};
pub use graph::{universal_ball_sizes, universal_cover_ball, Graph, RootedBall, Topology};
pub use info::{
    covariance, entropy, mutual_information, quadratic_info_bound_check, tv_distance,
    DecorrelationChain, Observable, QuadraticBoundReport,
};
pub use scalar::Scalar;
pub use tree::{
    ball_measure, bp_solve, chain_from_bp, decay_bound, decay_table, joint_at_distance, BPResult,
    DecayRow, TreeChain, TreeModel, TreeShape,
};

pub type DistTableF64 = DistTable<f64>;
pub type DistTableF32 = DistTable<f32>;
pub type PotentialF64 = Potential<f64>;
pub type PotentialF32 = Potential<f32>;
pub type TreeModelF64 = TreeModel<f64>;
pub type TreeModelF32 = TreeModel<f32>;
pub type TreeChainF64 = TreeChain<f64>;
pub type TreeChainF32 = TreeChain<f32>;
