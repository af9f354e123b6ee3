//! Dataset engineering and baseline learning for hyperspectral land-cover
//! benchmarks.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`scene`] holds the reflectance cube, polygon ground truth and
//!   nomenclature, plus rasterization, polygon grouping and a seeded
//!   synthetic scene generator.
//! * [`split`] formulates the spatially-disjoint train / pool / validation /
//!   test assignment as an integer program and solves it exactly (branch and
//!   bound) or heuristically (greedy + simulated annealing).
//! * [`features`] computes the 400-dimensional hand-crafted patch descriptor.
//! * [`mae`] is a from-scratch 1-D masked autoencoder and a dense autoencoder
//!   baseline with hand-written gradients.
//! * [`classifiers`] and [`metrics`] provide the downstream evaluation heads
//!   and scores.
//! * [`pipeline`] wires the stages together behind file formats and a run
//!   manifest.

pub mod benchmark;
pub mod classifiers;
pub mod features;
pub mod mae;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod scene;
pub mod split;
