use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{derive_seed, RenderedView, SynthError};
use crate::dense::{CoarseMatch, CoarseMatchSet};
use crate::geometry::{fundamental_from_poses, FundamentalMatrix, PointMatch};

/// Coarse cell pairs owned by the same scene point in both views, ordered by
/// the A cell.
pub fn gt_matches(view_a: &RenderedView, view_b: &RenderedView) -> CoarseMatchSet {
    let mut matches: Vec<CoarseMatch> = view_a
        .projections
        .iter()
        .zip(&view_b.projections)
        .filter_map(|(pa, pb)| match (pa.cell, pb.cell) {
            (Some(a), Some(b)) => Some(CoarseMatch {
                a,
                b,
                confidence: 1.0,
            }),
            _ => None,
        })
        .collect();
    matches.sort_by_key(|m| m.a);
    CoarseMatchSet { matches }
}

/// Exact pixel projections of every point visible in both views.
pub fn gt_point_matches(view_a: &RenderedView, view_b: &RenderedView) -> Vec<PointMatch> {
    view_a
        .projections
        .iter()
        .zip(&view_b.projections)
        .filter(|(pa, pb)| pa.visible && pb.visible)
        .map(|(pa, pb)| PointMatch::from_coords(pa.x, pa.y, pb.x, pb.y, 1.0))
        .collect()
}

pub fn ground_truth_fundamental(
    view_a: &RenderedView,
    view_b: &RenderedView,
) -> Result<FundamentalMatrix, SynthError> {
    Ok(fundamental_from_poses(
        &view_a.pose,
        &view_b.pose,
        &view_a.intrinsics,
        &view_b.intrinsics,
    )?)
}

/// Simulated sparse detector output used as anchor matches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorSettings {
    pub count: usize,
    /// Standard deviation of the Gaussian pixel noise on each coordinate.
    pub pixel_noise: f64,
    /// Extra random matches, as a fraction of `count`, with low confidence.
    pub outlier_fraction: f64,
}

impl Default for AnchorSettings {
    fn default() -> Self {
        Self {
            count: 64,
            pixel_noise: 0.5,
            outlier_fraction: 0.1,
        }
    }
}

/// Noisy co-visible projections with confidence in [0.6, 1) plus uniformly
/// random outliers with confidence in [0.05, 0.45).
pub fn synthesize_anchors(
    view_a: &RenderedView,
    view_b: &RenderedView,
    settings: &AnchorSettings,
    seed: u64,
) -> Result<Vec<PointMatch>, SynthError> {
    if !(settings.pixel_noise >= 0.0) || !(settings.outlier_fraction >= 0.0) {
        return Err(SynthError::InvalidSettings(
            "anchors: pixel_noise and outlier_fraction must be >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xA4C4));
    let noise = Normal::new(0.0, settings.pixel_noise)
        .map_err(|e| SynthError::InvalidSettings(format!("anchors: {e}")))?;
    let covisible = gt_point_matches(view_a, view_b);
    let n = settings.count.min(covisible.len());
    let mut picked = index::sample(&mut rng, covisible.len(), n).into_vec();
    picked.sort_unstable();
    let mut out = Vec::with_capacity(n);
    for i in picked {
        let m = covisible[i];
        out.push(PointMatch::from_coords(
            m.a.x + noise.sample(&mut rng),
            m.a.y + noise.sample(&mut rng),
            m.b.x + noise.sample(&mut rng),
            m.b.y + noise.sample(&mut rng),
            rng.gen_range(0.6..1.0),
        ));
    }
    let n_out = (settings.count as f64 * settings.outlier_fraction).round() as usize;
    for _ in 0..n_out {
        out.push(PointMatch::from_coords(
            rng.gen::<f64>() * view_a.width as f64,
            rng.gen::<f64>() * view_a.height as f64,
            rng.gen::<f64>() * view_b.width as f64,
            rng.gen::<f64>() * view_b.height as f64,
            rng.gen_range(0.05..0.45),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::symmetric_epipolar_error;
    use crate::synth::{build_scene, render_view, RenderSettings, ViewpointParams};

    fn settings() -> RenderSettings {
        RenderSettings {
            long_side: 160,
            coarse_cell_px: 8,
            fine_cell_px: 2,
        }
    }

    #[test]
    fn gt_matches_satisfy_epipolar_constraint() {
        let scene = build_scene(600, 0.0, 8, 5).unwrap();
        let a = render_view(
            &scene,
            &ViewpointParams::new(10.0, 0.0, 0.0),
            &settings(),
            0.0,
            1,
        )
        .unwrap();
        let b = render_view(
            &scene,
            &ViewpointParams::new(10.0, 10.0, 25.0),
            &settings(),
            0.0,
            2,
        )
        .unwrap();
        let f = ground_truth_fundamental(&a, &b).unwrap();
        let f_n = crate::geometry::FundamentalMatrix::raw(
            b.intrinsics.matrix().transpose() * f.matrix() * a.intrinsics.matrix(),
        );
        let pm = gt_point_matches(&a, &b);
        assert!(pm.len() > 100);
        for m in &pm {
            let e = symmetric_epipolar_error(
                &f_n,
                &a.intrinsics.normalize(&m.a),
                &b.intrinsics.normalize(&m.b),
            )
            .unwrap();
            assert!(e < 1e-10, "{e}");
        }
        let cm = gt_matches(&a, &b);
        assert!(!cm.is_empty());
        let mut seen_b: Vec<usize> = cm.iter().map(|m| m.b).collect();
        seen_b.sort_unstable();
        seen_b.dedup();
        assert_eq!(seen_b.len(), cm.len());
    }

    #[test]
    fn identical_views_match_pixel_identically() {
        let scene = build_scene(300, 0.0, 8, 6).unwrap();
        let v = ViewpointParams::new(10.0, 5.0, 5.0);
        let a = render_view(&scene, &v, &settings(), 0.0, 1).unwrap();
        let b = render_view(&scene, &v, &settings(), 0.0, 2).unwrap();
        for m in gt_point_matches(&a, &b) {
            assert_eq!(m.a, m.b);
        }
        for m in gt_matches(&a, &b).iter() {
            assert_eq!(m.a, m.b);
        }
    }

    #[test]
    fn disjoint_visibility_is_empty() {
        let scene = build_scene(300, 0.0, 8, 6).unwrap();
        let a = render_view(
            &scene,
            &ViewpointParams::new(10.0, 0.0, 0.0),
            &settings(),
            0.0,
            1,
        )
        .unwrap();
        // Looking at the scene from behind the back wall, far outside the box.
        let b = render_view(
            &scene,
            &ViewpointParams::new(10.0, 0.0, 180.0),
            &settings(),
            0.0,
            1,
        )
        .unwrap();
        let mut b = b;
        for p in &mut b.projections {
            p.visible = false;
            p.cell = None;
        }
        assert!(gt_matches(&a, &b).is_empty());
        assert!(gt_point_matches(&a, &b).is_empty());
    }

    #[test]
    fn anchors_have_expected_mix() {
        let scene = build_scene(600, 0.0, 8, 7).unwrap();
        let a = render_view(
            &scene,
            &ViewpointParams::new(10.0, 0.0, 0.0),
            &settings(),
            0.0,
            1,
        )
        .unwrap();
        let b = render_view(
            &scene,
            &ViewpointParams::new(10.0, 0.0, 10.0),
            &settings(),
            0.0,
            2,
        )
        .unwrap();
        let anchors = synthesize_anchors(&a, &b, &AnchorSettings::default(), 3).unwrap();
        let confident = anchors.iter().filter(|m| m.confidence > 0.5).count();
        assert_eq!(confident, 64);
        assert_eq!(anchors.len(), 64 + 6);
        assert_eq!(
            anchors,
            synthesize_anchors(&a, &b, &AnchorSettings::default(), 3).unwrap()
        );
    }
}
