//! Two-view geometric primitives.
//!
//! Points are pixel coordinates unless stated otherwise. A fundamental matrix
//! `F` relates image A to image B through `bᵀ F a = 0`; relative poses map
//! A-camera coordinates into B-camera coordinates.

use thiserror::Error;

mod epipolar;
mod homography;
mod pose;
mod ransac;
mod types;

pub use epipolar::{
    aligned_difference, fundamental_from_poses, hartley_normalization, normalized_eight_point,
    sampson_distance, symmetric_epipolar_error,
};
pub use homography::{apply_homography, homography_dlt, plane_homography};
pub use pose::{recover_pose, refine_relative_pose, triangulate};
pub use ransac::{ransac_fundamental, ransac_homography, RansacConfig};
pub use types::{
    skew, CameraIntrinsics, CameraPose, EssentialMatrix, FundamentalMatrix, HomogeneousPoint2,
    PointMatch,
};

/// Denominators below this are treated as degenerate.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point at infinity (w = 0) cannot be normalized")]
    PointAtInfinity,
    #[error("matrix has zero norm")]
    ZeroMatrix,
    #[error("singular value decomposition failed")]
    SvdFailed,
    #[error("intrinsics require fx > 0 and fy > 0")]
    InvalidIntrinsics,
    #[error("rotation is not orthonormal with determinant +1")]
    InvalidRotation,
    #[error("degenerate denominator: epipolar line coefficients vanish")]
    DegenerateDenominator,
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientMatches { needed: usize, got: usize },
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("zero baseline: fundamental matrix undefined for pure rotation")]
    ZeroBaseline,
    #[error("no consensus: best model has {best} inliers")]
    NoConsensus { best: usize },
    #[error("cheirality tie between pose candidates")]
    CheiralityTie,
    #[error("threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
}
