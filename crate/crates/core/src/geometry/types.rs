use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// A 2D image point in homogeneous form.
///
/// Measured points carry `w = 1`; [`HomogeneousPoint2::from_homogeneous`]
/// divides through by `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousPoint2 {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

impl HomogeneousPoint2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, w: 1.0 }
    }

    /// Normalizes `(x, y, w)` to `(x/w, y/w, 1)`.
    pub fn from_homogeneous(x: f64, y: f64, w: f64) -> Result<Self, GeometryError> {
        if w == 0.0 || !w.is_finite() {
            return Err(GeometryError::PointAtInfinity);
        }
        Ok(Self::new(x / w, y / w))
    }

    pub fn from_vector(v: &Vector3<f64>) -> Result<Self, GeometryError> {
        Self::from_homogeneous(v.x, v.y, v.z)
    }

    /// The point as `(x/w, y/w, 1)`.
    pub fn to_vector(self) -> Vector3<f64> {
        if self.w == 1.0 {
            Vector3::new(self.x, self.y, 1.0)
        } else {
            Vector3::new(self.x / self.w, self.y / self.w, 1.0)
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let a = self.to_vector();
        let b = other.to_vector();
        (a.x - b.x).hypot(a.y - b.y)
    }
}

/// Rank-2 two-view constraint `bᵀ F a = 0` between images A and B.
///
/// [`FundamentalMatrix::new`] applies the canonical scaling: unit Frobenius
/// norm with the largest-magnitude entry positive. [`FundamentalMatrix::raw`]
/// keeps the matrix exactly as given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix {
    m: Matrix3<f64>,
}

impl FundamentalMatrix {
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        Ok(Self {
            m: canonical_scale(&m)?,
        })
    }

    pub fn raw(m: Matrix3<f64>) -> Self {
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn transpose(&self) -> Self {
        Self {
            m: self.m.transpose(),
        }
    }

    /// Projects onto the rank-2 manifold by zeroing the smallest singular
    /// value, then rescales canonically.
    pub fn rank2_projected(&self) -> Result<Self, GeometryError> {
        let svd = self.m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(GeometryError::SvdFailed),
        };
        let mut s = svd.singular_values;
        let min_idx = s.imin();
        s[min_idx] = 0.0;
        Self::new(u * Matrix3::from_diagonal(&s) * v_t)
    }

    pub fn singular_values(&self) -> Vector3<f64> {
        let mut s = self.m.singular_values();
        s.as_mut_slice()
            .sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        s
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        matrix_rows(&self.m)
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }
}

/// Unit Frobenius norm, sign chosen so the largest-magnitude entry is positive.
pub(crate) fn canonical_scale(m: &Matrix3<f64>) -> Result<Matrix3<f64>, GeometryError> {
    let norm = m.norm();
    if !(norm > 1e-300) || !norm.is_finite() {
        return Err(GeometryError::ZeroMatrix);
    }
    let mut out = m / norm;
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for v in out.iter() {
        if v.abs() > best {
            best = v.abs();
            sign = v.signum();
        }
    }
    out *= sign;
    Ok(out)
}

pub(crate) fn matrix_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut rows = [[0.0; 3]; 3];
    for (r, row) in rows.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    rows
}

/// Calibrated counterpart of [`FundamentalMatrix`]; always stored on the
/// essential manifold (singular values `(1, 1, 0)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix {
    m: Matrix3<f64>,
}

impl EssentialMatrix {
    /// Projects an arbitrary 3×3 matrix onto the essential manifold.
    pub fn project(m: &Matrix3<f64>) -> Result<Self, GeometryError> {
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(GeometryError::SvdFailed),
        };
        let s = svd.singular_values;
        if !(s.max() > 1e-300) {
            return Err(GeometryError::ZeroMatrix);
        }
        // Order the singular vectors by decreasing singular value.
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
        let mut u_sorted = Matrix3::zeros();
        let mut v_t_sorted = Matrix3::zeros();
        for (dst, &src) in order.iter().enumerate() {
            u_sorted.set_column(dst, &u.column(src));
            v_t_sorted.set_row(dst, &v_t.row(src));
        }
        let sigma = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        Ok(Self {
            m: u_sorted * sigma * v_t_sorted,
        })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn identity() -> Self {
        Self {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.fx > 0.0 && self.fy > 0.0 && self.cx.is_finite() && self.cy.is_finite() {
            Ok(())
        } else {
            Err(GeometryError::InvalidIntrinsics)
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Pixel point to normalized image coordinates.
    pub fn normalize(&self, p: &HomogeneousPoint2) -> HomogeneousPoint2 {
        let v = p.to_vector();
        HomogeneousPoint2::new((v.x - self.cx) / self.fx, (v.y - self.cy) / self.fy)
    }

    /// Normalized camera-frame direction to pixel point.
    pub fn project(&self, p_cam: &Vector3<f64>) -> Option<HomogeneousPoint2> {
        if p_cam.z.abs() < 1e-300 {
            return None;
        }
        Some(HomogeneousPoint2::new(
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ))
    }
}

/// World-to-camera rigid transform: `x_cam = rotation · x_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let orth = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        let det = self.rotation.determinant();
        if orth <= 1e-9
            && (det - 1.0).abs() <= 1e-9
            && self.translation.iter().all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(GeometryError::InvalidRotation)
        }
    }

    pub fn transform(&self, x_world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x_world + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Pose of `other` relative to `self`: maps A-camera coordinates to
    /// B-camera coordinates when `self` is A and `other` is B.
    pub fn relative_to(&self, other: &CameraPose) -> CameraPose {
        let rotation = other.rotation * self.rotation.transpose();
        let translation = other.translation - rotation * self.translation;
        CameraPose {
            rotation,
            translation,
        }
    }
}

/// A correspondence between image A and image B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMatch {
    pub a: HomogeneousPoint2,
    pub b: HomogeneousPoint2,
    pub confidence: f64,
}

impl PointMatch {
    /// Builds a match, clamping the confidence into `[0, 1]`.
    pub fn new(a: HomogeneousPoint2, b: HomogeneousPoint2, confidence: f64) -> Self {
        Self {
            a,
            b,
            confidence: if confidence.is_nan() {
                0.0
            } else {
                confidence.clamp(0.0, 1.0)
            },
        }
    }

    pub fn from_coords(ax: f64, ay: f64, bx: f64, by: f64, confidence: f64) -> Self {
        Self::new(
            HomogeneousPoint2::new(ax, ay),
            HomogeneousPoint2::new(bx, by),
            confidence,
        )
    }
}

/// Skew-symmetric cross-product matrix `[t]ₓ`.
pub fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}
