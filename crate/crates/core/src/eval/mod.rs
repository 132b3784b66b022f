//! Matching precision, pose and homography AUC, and feature-track statistics.

mod metrics;
mod tracks;

use thiserror::Error;

use crate::geometry::GeometryError;

pub use metrics::{
    auc, estimate_pose_from_matches, homography_auc, homography_corner_error, image_corners,
    matching_precision, pose_error, PoseErrorSample, DEFAULT_PRECISION_THRESHOLD,
};
pub use tracks::{build_tracks, track_stats, TrackGraph, TrackNode, TrackStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("error list is empty")]
    EmptyErrors,
    #[error("thresholds must be positive and ascending")]
    InvalidThresholds,
    #[error("translation is a zero vector")]
    ZeroTranslation,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
