//! Two-view geometry and dense-match refinement.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: Sampson/symmetric epipolar errors, eight-point and DLT
//!   solvers, RANSAC, relative pose recovery.
//! - [`dense`]: similarity, dual-softmax confidence and mutual nearest
//!   neighbours over coarse feature grids.
//! - [`optimizer`]: Sampson-constrained iterative reweighting of the dense
//!   confidence map, initialized from anchor matches.
//! - [`refine`]: correlation-window expectation for sub-pixel matches.
//! - [`synth`]: deterministic synthetic scenes, cameras and feature grids.
//! - [`eval`]: matching precision, pose and homography AUC, track lengths.

pub mod dense;
pub mod eval;
pub mod geometry;
pub mod optimizer;
pub mod refine;
pub mod synth;
