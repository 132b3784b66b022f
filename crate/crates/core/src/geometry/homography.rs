use nalgebra::{DMatrix, Matrix3, Vector3};

use super::epipolar::{hartley_normalization, nullspace9};
use super::types::{CameraIntrinsics, CameraPose, HomogeneousPoint2, PointMatch};
use super::GeometryError;

const DEGENERACY_RATIO: f64 = 1e-10;

/// Normalized direct linear transform for `b ~ H a` from `n ≥ 4` matches.
///
/// The result is scaled so that `H[2,2] = 1` when that entry is not tiny,
/// otherwise to unit Frobenius norm.
pub fn homography_dlt(matches: &[PointMatch]) -> Result<Matrix3<f64>, GeometryError> {
    if matches.len() < 4 {
        return Err(GeometryError::InsufficientMatches {
            needed: 4,
            got: matches.len(),
        });
    }
    let ta = hartley_normalization(matches.iter().map(|m| &m.a))?;
    let tb = hartley_normalization(matches.iter().map(|m| &m.b))?;

    let mut design = DMatrix::<f64>::zeros(2 * matches.len(), 9);
    for (k, m) in matches.iter().enumerate() {
        let a = ta * m.a.to_vector();
        let b = tb * m.b.to_vector();
        let r0 = [0.0, 0.0, 0.0, -a.x, -a.y, -1.0, b.y * a.x, b.y * a.y, b.y];
        let r1 = [a.x, a.y, 1.0, 0.0, 0.0, 0.0, -b.x * a.x, -b.x * a.y, -b.x];
        for c in 0..9 {
            design[(2 * k, c)] = r0[c];
            design[(2 * k + 1, c)] = r1[c];
        }
    }
    let (null, ratio) = nullspace9(design)?;
    if ratio < DEGENERACY_RATIO {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let tb_inv = tb
        .try_inverse()
        .ok_or(GeometryError::DegenerateConfiguration)?;
    let h = tb_inv * Matrix3::from_row_slice(&null) * ta;
    let norm = h.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let h = h / norm;
    if h[(2, 2)].abs() > 1e-12 {
        Ok(h / h[(2, 2)])
    } else {
        Ok(h)
    }
}

/// Maps `p` through `h`; `None` when the image lands at infinity.
pub fn apply_homography(h: &Matrix3<f64>, p: &HomogeneousPoint2) -> Option<HomogeneousPoint2> {
    let v = h * p.to_vector();
    if v.z.abs() < 1e-300 {
        return None;
    }
    Some(HomogeneousPoint2::new(v.x / v.z, v.y / v.z))
}

/// Homography induced by the world plane `normal · X = offset` between two
/// posed cameras: `K_B (R + t n_Aᵀ / d_A) K_A⁻¹`, with the plane expressed in
/// camera A's frame.
pub fn plane_homography(
    pose_a: &CameraPose,
    pose_b: &CameraPose,
    k_a: &CameraIntrinsics,
    k_b: &CameraIntrinsics,
    normal: &Vector3<f64>,
    offset: f64,
) -> Result<Matrix3<f64>, GeometryError> {
    let rel = pose_a.relative_to(pose_b);
    let n_a = pose_a.rotation * normal;
    let d_a = offset + n_a.dot(&pose_a.translation);
    if d_a.abs() < 1e-12 {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let h = k_b.matrix() * (rel.rotation + rel.translation * n_a.transpose() / d_a) * k_a.inverse();
    Ok(h / h[(2, 2)])
}
