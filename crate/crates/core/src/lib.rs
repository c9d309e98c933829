//! Training regularized linear models on data split across both
//! observations and features.
//!
//! Two solvers are provided, both running on a deterministic simulated
//! cluster of `P * Q` workers ([`engine::ClusterSim`]):
//!
//! * [`d3ca`]: distributed dual coordinate ascent. Local SDCA on every
//!   block, dual averaging per row partition, primal recovery per column
//!   partition.
//! * [`radisa`]: a primal SVRG method in which row partitions exchange
//!   disjoint feature sub-blocks between iterations, plus an averaging
//!   variant.
//!
//! The [`harness`] module supplies the reference optimum, metrics and the
//! experiment drivers behind the `ddopt` command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod d3ca;
pub mod data;
pub mod engine;
pub mod error;
pub mod harness;
pub mod losses;
pub mod matrix;
pub mod model;
pub mod partition;
pub mod radisa;

pub use error::{Error, Result};
pub use model::{DataBlock, DualVector, LossKind, PartitionGrid, PartitionedData, PrimalVector, ProblemSpec, RunHistory};

/// Chapters of the guide in `book/`, compiled as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/duality.md")]
    pub struct Duality;
    #[doc = include_str!("../../../book/src/partitioning.md")]
    pub struct Partitioning;
    #[doc = include_str!("../../../book/src/cluster.md")]
    pub struct Cluster;
    #[doc = include_str!("../../../book/src/d3ca.md")]
    pub struct D3ca;
    #[doc = include_str!("../../../book/src/radisa.md")]
    pub struct Radisa;
    #[doc = include_str!("../../../book/src/data.md")]
    pub struct Data;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
}
