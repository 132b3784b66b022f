use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{
    apply_homography, ransac_fundamental, ransac_homography, recover_pose, refine_relative_pose,
    symmetric_epipolar_error, CameraIntrinsics, CameraPose, FundamentalMatrix, GeometryError,
    HomogeneousPoint2, PointMatch, RansacConfig,
};

pub const DEFAULT_PRECISION_THRESHOLD: f64 = 1e-4;

/// Fraction of matches whose symmetric epipolar error, measured in
/// intrinsics-normalized coordinates, is below `threshold`. An empty list
/// scores 0 and degenerate matches count as incorrect.
pub fn matching_precision(
    matches: &[PointMatch],
    gt_f: &FundamentalMatrix,
    k_a: &CameraIntrinsics,
    k_b: &CameraIntrinsics,
    threshold: f64,
) -> f64 {
    if matches.is_empty() {
        return 0.0;
    }
    let f_n = FundamentalMatrix::raw(k_b.matrix().transpose() * gt_f.matrix() * k_a.matrix());
    let correct = matches
        .iter()
        .filter(|m| {
            symmetric_epipolar_error(&f_n, &k_a.normalize(&m.a), &k_b.normalize(&m.b))
                .is_ok_and(|e| e < threshold)
        })
        .count();
    correct as f64 / matches.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorSample {
    pub rotation_deg: f64,
    pub translation_deg: f64,
    pub combined_deg: f64,
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let v = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let cos = (r.trace() - 1.0) / 2.0;
    (v.norm() / 2.0).atan2(cos).to_degrees()
}

/// Rotation angle of `R_est·R_gtᵀ` and the angle between translation
/// directions, both in degrees.
pub fn pose_error(
    estimated: &CameraPose,
    ground_truth: &CameraPose,
) -> Result<PoseErrorSample, EvalError> {
    if estimated.translation.norm() == 0.0 || ground_truth.translation.norm() == 0.0 {
        return Err(EvalError::ZeroTranslation);
    }
    let rotation_deg = rotation_angle(&(estimated.rotation * ground_truth.rotation.transpose()));
    let translation_deg = angle_between(&estimated.translation, &ground_truth.translation);
    Ok(PoseErrorSample {
        rotation_deg,
        translation_deg,
        combined_deg: rotation_deg.max(translation_deg),
    })
}

/// Normalized area under the cumulative accuracy curve up to each threshold.
/// Non-finite errors count as failures.
pub fn auc(errors: &[f64], thresholds: &[f64]) -> Result<Vec<f64>, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyErrors);
    }
    if thresholds.is_empty()
        || thresholds.iter().any(|t| !(*t > 0.0) || !t.is_finite())
        || thresholds.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(EvalError::InvalidThresholds);
    }
    let mut sorted: Vec<f64> = errors
        .iter()
        .map(|e| {
            if e.is_finite() {
                e.max(0.0)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            // The accuracy curve steps up by 1/n at each error, so its area on
            // [0, t] is the sum of (t - e) over errors below t.
            let area: f64 = sorted.iter().take_while(|&&e| e < t).map(|e| t - e).sum();
            area / (n * t)
        })
        .collect())
}

const POSE_REFINE_ITERATIONS: usize = 50;

/// RANSAC fundamental matrix, pose recovery, then robust nonlinear
/// refinement of the pose over the RANSAC inliers.
pub fn estimate_pose_from_matches(
    matches: &[PointMatch],
    k_a: &CameraIntrinsics,
    k_b: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> Result<CameraPose, EvalError> {
    let (f, mask) = ransac_fundamental(matches, cfg)?;
    let inliers: Vec<PointMatch> = matches
        .iter()
        .zip(&mask)
        .filter(|(_, &keep)| keep)
        .map(|(m, _)| *m)
        .collect();
    let pose = recover_pose(&f, k_a, k_b, &inliers)?;
    Ok(refine_relative_pose(
        &pose,
        k_a,
        k_b,
        &inliers,
        POSE_REFINE_ITERATIONS,
    )?)
}

pub fn image_corners(width: f64, height: f64) -> [HomogeneousPoint2; 4] {
    [
        HomogeneousPoint2::new(0.0, 0.0),
        HomogeneousPoint2::new(width, 0.0),
        HomogeneousPoint2::new(width, height),
        HomogeneousPoint2::new(0.0, height),
    ]
}

/// Mean distance between the corners mapped by the two homographies.
pub fn homography_corner_error(
    h_est: &Matrix3<f64>,
    h_gt: &Matrix3<f64>,
    corners: &[HomogeneousPoint2],
) -> Result<f64, EvalError> {
    let mut total = 0.0;
    for c in corners {
        let (Some(p), Some(q)) = (apply_homography(h_est, c), apply_homography(h_gt, c)) else {
            return Err(GeometryError::PointAtInfinity.into());
        };
        total += p.distance(&q);
    }
    Ok(total / corners.len() as f64)
}

/// Estimates a homography by RANSAC and scores its corner error against
/// `gt_h`. Returns the corner error and its AUC at each threshold.
pub fn homography_auc(
    matches: &[PointMatch],
    gt_h: &Matrix3<f64>,
    corners: &[HomogeneousPoint2],
    thresholds: &[f64],
    cfg: &RansacConfig,
) -> Result<(f64, Vec<f64>), EvalError> {
    let (h, _) = ransac_homography(matches, cfg)?;
    let err = homography_corner_error(&h, gt_h, corners)?;
    Ok((err, auc(&[err], thresholds)?))
}
