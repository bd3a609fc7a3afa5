//! Core algorithms for exploring the risk / trade-off decision-strategy space of
//! Ordered Weighted Averaging (OWA) suitability analysis.
//!
//! The crate is `no_std` (with `alloc`) and performs no IO. It provides:
//!
//! * [`grid`]: rasters, criterion stacks and validity masks.
//! * [`criteria`]: capacity-matrix scoring and biophysical modifier rules that
//!   turn a land-cover map into normalized criterion layers.
//! * [`strategy`]: the parabolic (risk, trade-off) space, order-weight generation
//!   from moment-matched truncated normal densities, and seeded experimental
//!   designs.
//! * [`owa`]: per-pixel OWA evaluation with a reusable per-pixel ordering cache.
//! * [`cluster`]: map dissimilarities, Ward agglomeration, tree cuts, the
//!   within/total variance curve and per-cluster mean and deviation maps.
//!
//! IO, file formats, parallel drivers and the command line live in the
//! `owa-explorer` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cluster;
pub mod criteria;
pub mod grid;
mod normal;
pub mod owa;
pub mod strategy;

pub use cluster::{
    ClusterError, ClusterSummary, DissimilarityMatrix, InMemoryMaps, MapSource, Merge, MergeTree,
    VarianceRatio,
};
pub use grid::{CriterionStack, CriterionWeights, GridError, GridMeta, Raster};
pub use owa::{OwaError, PixelPermutationCache, SuitabilityMap};
pub use strategy::{
    DecisionPoint, ExperimentalDesign, OrderWeights, StrategyError, TruncatedNormalSpec,
};
