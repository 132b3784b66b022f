use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::geometry::CameraPose;

/// Camera on a sphere around the origin. `alpha` is the elevation above the
/// xz-plane and `beta` the azimuth of the axis projection measured from +z,
/// both in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewpointParams {
    pub distance: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ViewpointParams {
    pub fn new(distance: f64, alpha: f64, beta: f64) -> Self {
        Self {
            distance,
            alpha,
            beta,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.distance > 0.0) || !self.distance.is_finite() {
            return Err(SynthError::InvalidViewpoint(format!(
                "distance must be > 0, got {}",
                self.distance
            )));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(SynthError::InvalidViewpoint("angles must be finite".into()));
        }
        if self.alpha.abs() >= 90.0 {
            return Err(SynthError::Gimbal(self.alpha));
        }
        Ok(())
    }

    pub fn center(&self) -> Vector3<f64> {
        let (a, b) = (self.alpha.to_radians(), self.beta.to_radians());
        self.distance * Vector3::new(b.sin() * a.cos(), a.sin(), b.cos() * a.cos())
    }
}

/// Pose of a camera at `v.center()` looking at the origin, with image "up"
/// along world +y.
pub fn place_camera(v: &ViewpointParams) -> Result<CameraPose, SynthError> {
    v.validate()?;
    let c = v.center();
    let z = -c / c.norm();
    let up = Vector3::new(0.0, 1.0, 0.0);
    let up_perp = up - z * up.dot(&z);
    let y = -up_perp.normalize();
    let x = y.cross(&z);
    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let translation = -(rotation * c);
    Ok(CameraPose::new(rotation, translation)?)
}
