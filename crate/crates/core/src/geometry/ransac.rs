use nalgebra::Matrix3;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::epipolar::{normalized_eight_point, sampson_distance};
use super::homography::{apply_homography, homography_dlt};
use super::types::{FundamentalMatrix, PointMatch};
use super::GeometryError;

/// Robust-estimation settings. The inlier threshold is in the units of the
/// residual being tested (squared pixels for Sampson, pixels for homography
/// reprojection).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RansacConfig {
    pub threshold: f64,
    pub max_iters: usize,
    pub seed: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.999
}

impl RansacConfig {
    pub fn new(threshold: f64, max_iters: usize, seed: u64) -> Self {
        Self {
            threshold,
            max_iters,
            seed,
            confidence: default_confidence(),
        }
    }
}

/// Number of iterations that reaches `confidence` for inlier ratio `w` and sample size `s`.
fn adaptive_iterations(confidence: f64, inlier_ratio: f64, sample_size: usize) -> usize {
    let p_good = inlier_ratio.powi(sample_size as i32);
    if p_good >= 1.0 - f64::EPSILON {
        return 1;
    }
    if p_good <= 0.0 {
        return usize::MAX;
    }
    let k = (1.0 - confidence).ln() / (1.0 - p_good).ln();
    if k.is_finite() {
        k.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

struct Consensus<M> {
    model: M,
    mask: Vec<bool>,
    count: usize,
}

fn run_ransac<M, Fit, Inlier>(
    matches: &[PointMatch],
    sample_size: usize,
    cfg: &RansacConfig,
    fit: Fit,
    is_inlier: Inlier,
) -> Result<(M, Vec<bool>), GeometryError>
where
    M: Copy,
    Fit: Fn(&[PointMatch]) -> Result<M, GeometryError>,
    Inlier: Fn(&M, &PointMatch) -> bool,
{
    if matches.len() < sample_size {
        return Err(GeometryError::InsufficientMatches {
            needed: sample_size,
            got: matches.len(),
        });
    }
    if !(cfg.threshold > 0.0) || !cfg.threshold.is_finite() {
        return Err(GeometryError::InvalidThreshold(cfg.threshold));
    }
    let score = |model: &M| -> (Vec<bool>, usize) {
        let mask: Vec<bool> = matches.iter().map(|m| is_inlier(model, m)).collect();
        let count = mask.iter().filter(|&&v| v).count();
        (mask, count)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<Consensus<M>> = None;
    let mut needed = cfg.max_iters;
    let mut sample = Vec::with_capacity(sample_size);
    let mut iter = 0;
    while iter < cfg.max_iters.min(needed) {
        iter += 1;
        sample.clear();
        sample.extend(
            index::sample(&mut rng, matches.len(), sample_size)
                .into_iter()
                .map(|i| matches[i]),
        );
        let Ok(model) = fit(&sample) else {
            continue;
        };
        let (mask, count) = score(&model);
        if best.as_ref().map_or(true, |b| count > b.count) {
            let ratio = count as f64 / matches.len() as f64;
            needed = adaptive_iterations(cfg.confidence, ratio, sample_size);
            best = Some(Consensus { model, mask, count });
        }
    }

    let best = match best {
        Some(b) if b.count >= sample_size => b,
        Some(b) => return Err(GeometryError::NoConsensus { best: b.count }),
        None => return Err(GeometryError::NoConsensus { best: 0 }),
    };

    let inliers: Vec<PointMatch> = matches
        .iter()
        .zip(&best.mask)
        .filter(|(_, &keep)| keep)
        .map(|(m, _)| *m)
        .collect();
    if let Ok(refit) = fit(&inliers) {
        let (mask, count) = score(&refit);
        if count >= best.count {
            return Ok((refit, mask));
        }
    }
    Ok((best.model, best.mask))
}

/// RANSAC over eight-point samples with a Sampson-distance inlier test. The
/// winning model is re-fit on all of its inliers.
pub fn ransac_fundamental(
    matches: &[PointMatch],
    cfg: &RansacConfig,
) -> Result<(FundamentalMatrix, Vec<bool>), GeometryError> {
    run_ransac(matches, 8, cfg, normalized_eight_point, |f, m| {
        sampson_distance(f, &m.a, &m.b).is_ok_and(|d| d < cfg.threshold)
    })
}

/// RANSAC over four-point DLT samples with a one-sided reprojection test in image B.
pub fn ransac_homography(
    matches: &[PointMatch],
    cfg: &RansacConfig,
) -> Result<(Matrix3<f64>, Vec<bool>), GeometryError> {
    run_ransac(matches, 4, cfg, homography_dlt, |h, m| {
        apply_homography(h, &m.a).is_some_and(|p| p.distance(&m.b) < cfg.threshold)
    })
}
