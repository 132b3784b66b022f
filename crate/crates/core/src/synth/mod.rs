//! Deterministic synthetic scenes, cameras and feature grids.
//!
//! A scene is a set of 3D points on a few axis-aligned rectangles. Each
//! point carries a descriptor group id; points in the same group share a
//! descriptor, which is how repeated texture is simulated. Rendering
//! projects the points through a pinhole camera and writes one coarse
//! descriptor per grid cell, taken from the point nearest the cell center.
//! The fine grid samples a smooth surface texture field so that sub-pixel
//! refinement has something to lock on to.

mod camera;
mod correspondences;
mod render;
mod scene;
mod sweep;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dense::MatchingError;
use crate::geometry::GeometryError;

pub use camera::{place_camera, ViewpointParams};
pub use correspondences::{
    ground_truth_fundamental, gt_matches, gt_point_matches, synthesize_anchors, AnchorSettings,
};
pub use render::{
    intrinsics_for, render_from_pose, render_view, PointProjection, RenderSettings, RenderedView,
};
pub use scene::{build_planar_scene, build_scene, Plane, Scene, ScenePoint, Surface, TextureField};
pub use sweep::{make_pair_sweep, PairSweepSpec, SweepPair, SweepVariable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("ambiguity fraction must lie in [0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("scene needs at least 8 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid viewpoint: {0}")]
    InvalidViewpoint(String),
    #[error("camera elevation of {0} degrees is degenerate (|alpha| must be < 90)")]
    Gimbal(f64),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Mixes a tag into a seed so independent random streams can be derived
/// from one user-facing seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn gaussian_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Normalizes `v` in place. Falls back to the first basis vector when the
/// norm is too small to normalize reliably.
pub(crate) fn normalize_or_basis(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-6 && norm.is_finite() {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
        if let Some(first) = v.first_mut() {
            *first = 1.0;
        }
    }
}

pub(crate) fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut v = gaussian_vec(rng, dim);
    normalize_or_basis(&mut v);
    v
}
