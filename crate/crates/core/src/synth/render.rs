use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::texture_descriptor;
use super::{derive_seed, gaussian_vec, normalize_or_basis, place_camera, random_unit};
use super::{Scene, SynthError, ViewpointParams};
use crate::dense::FeatureGrid;
use crate::geometry::{CameraIntrinsics, CameraPose};

/// Image and grid resolution. The short side is 3/4 of the long side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    pub long_side: usize,
    pub coarse_cell_px: usize,
    pub fine_cell_px: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            long_side: 832,
            coarse_cell_px: 8,
            fine_cell_px: 2,
        }
    }
}

impl RenderSettings {
    pub fn image_size(&self) -> (usize, usize) {
        (self.long_side, self.long_side * 3 / 4)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let (w, h) = self.image_size();
        if self.long_side == 0 || self.long_side % 4 != 0 {
            return Err(SynthError::InvalidSettings(format!(
                "long_side: must be a positive multiple of 4, got {}",
                self.long_side
            )));
        }
        for (name, cell) in [
            ("coarse_cell_px", self.coarse_cell_px),
            ("fine_cell_px", self.fine_cell_px),
        ] {
            if cell == 0 || w % cell != 0 || h % cell != 0 {
                return Err(SynthError::InvalidSettings(format!(
                    "{name}: {cell} must be positive and divide the image size {w}x{h}"
                )));
            }
        }
        Ok(())
    }
}

/// Shared intrinsics: focal length 0.8 × long side, principal point at the
/// image center.
pub fn intrinsics_for(settings: &RenderSettings) -> CameraIntrinsics {
    let (w, h) = settings.image_size();
    let f = 0.8 * settings.long_side as f64;
    CameraIntrinsics {
        fx: f,
        fy: f,
        cx: w as f64 / 2.0,
        cy: h as f64 / 2.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointProjection {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
    pub visible: bool,
    /// Coarse cell this point owns, if it is the visible point nearest that
    /// cell's center.
    pub cell: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub params: Option<ViewpointParams>,
    pub pose: CameraPose,
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
    pub projections: Vec<PointProjection>,
    pub coarse: FeatureGrid,
    pub fine: FeatureGrid,
}

pub fn render_view(
    scene: &Scene,
    v: &ViewpointParams,
    settings: &RenderSettings,
    noise_sigma: f64,
    seed: u64,
) -> Result<RenderedView, SynthError> {
    let pose = place_camera(v)?;
    let mut view = render_from_pose(scene, &pose, settings, noise_sigma, seed)?;
    view.params = Some(*v);
    Ok(view)
}

pub fn render_from_pose(
    scene: &Scene,
    pose: &CameraPose,
    settings: &RenderSettings,
    noise_sigma: f64,
    seed: u64,
) -> Result<RenderedView, SynthError> {
    settings.validate()?;
    if scene.points.is_empty() {
        return Err(SynthError::InvalidSettings("scene has no points".into()));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(SynthError::InvalidSettings(format!(
            "noise_sigma: must be >= 0, got {noise_sigma}"
        )));
    }
    let k = intrinsics_for(settings);
    let (w, h) = settings.image_size();
    let cs = settings.coarse_cell_px as f64;
    let (cols, rows) = (w / settings.coarse_cell_px, h / settings.coarse_cell_px);

    let mut projections: Vec<PointProjection> = scene
        .points
        .iter()
        .map(|p| {
            let xc = pose.transform(&p.position);
            let (x, y) = (k.fx * xc.x / xc.z + k.cx, k.fy * xc.y / xc.z + k.cy);
            let visible = xc.z > 0.0 && x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64;
            PointProjection {
                x,
                y,
                depth: xc.z,
                visible,
                cell: None,
            }
        })
        .collect();

    // Ownership: nearest visible point to each cell center, lowest index on ties.
    let mut owner: Vec<Option<(usize, f64)>> = vec![None; cols * rows];
    for (i, p) in projections.iter().enumerate() {
        if !p.visible {
            continue;
        }
        let (col, row) = ((p.x / cs) as usize, (p.y / cs) as usize);
        let cell = row * cols + col;
        let (ccx, ccy) = ((col as f64 + 0.5) * cs, (row as f64 + 0.5) * cs);
        let d2 = (p.x - ccx).powi(2) + (p.y - ccy).powi(2);
        if owner[cell].map_or(true, |(_, best)| d2 < best) {
            owner[cell] = Some((i, d2));
        }
    }
    for (cell, o) in owner.iter().enumerate() {
        if let Some((i, _)) = o {
            projections[*i].cell = Some(cell);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xC0A5));
    let dim = scene.descriptor_dim();
    let mut coarse = Vec::with_capacity(cols * rows * dim);
    for o in &owner {
        let noise = gaussian_vec(&mut rng, dim);
        let d = match o {
            Some((i, _)) => {
                let mut d: Vec<f64> = scene
                    .descriptor_of(*i)
                    .iter()
                    .zip(&noise)
                    .map(|(g, n)| g + noise_sigma * n)
                    .collect();
                normalize_or_basis(&mut d);
                d
            }
            None => random_unit(&mut rng, dim),
        };
        coarse.extend(d.iter().map(|&v| v as f32));
    }

    let fs = settings.fine_cell_px as f64;
    let (fcols, frows) = (w / settings.fine_cell_px, h / settings.fine_cell_px);
    let fdim = scene.texture.dim();
    let center = pose.center();
    let rt = pose.rotation.transpose();
    let mut fine = Vec::with_capacity(fcols * frows * fdim);
    for row in 0..frows {
        for col in 0..fcols {
            let (u, v) = ((col as f64 + 0.5) * fs, (row as f64 + 0.5) * fs);
            let dir = rt * Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            let hit = scene
                .surfaces
                .iter()
                .filter_map(|s| s.intersect(&center, &dir))
                .fold(None, |best: Option<f64>, l| {
                    Some(best.map_or(l, |b| b.min(l)))
                });
            let noise = gaussian_vec(&mut rng, fdim);
            let d = match hit {
                Some(lambda) => {
                    // Half the fine cell's footprint on a fronto-parallel surface.
                    let sigma = 0.5 * fs * lambda * dir.norm() / k.fx;
                    let mut d: Vec<f64> =
                        texture_descriptor(scene, &(center + dir * lambda), sigma)
                            .iter()
                            .zip(&noise)
                            .map(|(t, n)| t + noise_sigma * n)
                            .collect();
                    normalize_or_basis(&mut d);
                    d
                }
                None => random_unit(&mut rng, fdim),
            };
            fine.extend(d.iter().map(|&v| v as f32));
        }
    }

    Ok(RenderedView {
        params: None,
        pose: *pose,
        intrinsics: k,
        width: w,
        height: h,
        projections,
        coarse: FeatureGrid::new(cols, rows, dim, cs, coarse)?,
        fine: FeatureGrid::new(fcols, frows, fdim, fs, fine)?,
    })
}
