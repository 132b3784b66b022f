//! Geometry-aware optimization of dense matches.
//!
//! Starting from the dual-softmax confidence map, a fundamental matrix is
//! initialized from sparse anchor matches (or, lacking enough confident
//! anchors, from the most confident half of the mutual nearest neighbours).
//! Each iteration then
//!
//! 1. turns the Sampson distance of every cell pair into a geometric
//!    confidence `sigmoid(relu(τ − d))`, which lies in `[0.5, sigmoid(τ)]`,
//! 2. multiplies it into the confidence map with weight `w` and min-max
//!    normalizes the full map,
//! 3. re-selects mutual nearest neighbours at `θ_iter` and optionally refits
//!    the fundamental matrix on those of them that lie within `τ` of the
//!    current model. Without that gate, the low-confidence junk admitted by
//!    the permissive `θ_iter` dominates the least-squares fit.
//!
//! The final matches are the mutual nearest neighbours of the last map at the
//! stricter threshold `θ_final`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::{
    cell_to_pixel, dual_softmax, minmax_normalize_in_place, mnn_select, similarity, CoarseMatchSet,
    ConfidenceMap, FeatureGrid, MatchingError, DEFAULT_TEMPERATURE,
};
use crate::geometry::{
    normalized_eight_point, ransac_fundamental, sampson_distance, FundamentalMatrix, GeometryError,
    PointMatch, RansacConfig, DEGENERATE_DENOMINATOR,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("initialization failed: fallback set has {available} matches, need 8")]
    InitializationFailure { available: usize },
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Sampson distance threshold, in squared pixels of the coarse cell centers.
    pub tau: f64,
    /// Update weight applied with the geometric confidence.
    pub weight: f64,
    pub iterations: usize,
    /// Selection threshold inside the loop.
    pub theta_iter: f64,
    /// Selection threshold for the final matches.
    pub theta_final: f64,
    pub min_anchor_count: usize,
    pub min_anchor_confidence: f64,
    pub refit_each_iteration: bool,
    /// Dual-softmax temperature of the initial confidence map.
    pub temperature: f64,
    /// Seeds the RANSAC used by the top-half fallback initialization.
    pub seed: u64,
    pub fallback_ransac_iters: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            tau: 10.0,
            weight: 1.2,
            iterations: 10,
            theta_iter: 0.01,
            theta_final: 0.2,
            min_anchor_count: 10,
            min_anchor_confidence: 0.5,
            refit_each_iteration: true,
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
            fallback_ransac_iters: 2000,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let fail = |msg: &str| Err(OptimizeError::InvalidConfig(msg.to_string()));
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return fail("tau: must be > 0");
        }
        if !(self.weight > 0.0) || !self.weight.is_finite() {
            return fail("weight: must be > 0");
        }
        if !(0.0..=1.0).contains(&self.theta_iter) {
            return fail("theta_iter: must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.theta_final) {
            return fail("theta_final: must lie in [0, 1]");
        }
        if self.theta_iter > self.theta_final {
            return fail("theta_iter: must not exceed theta_final");
        }
        if !(0.0..=1.0).contains(&self.min_anchor_confidence) {
            return fail("min_anchor_confidence: must lie in [0, 1]");
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return fail("temperature: must be > 0");
        }
        if self.fallback_ransac_iters == 0 {
            return fail("fallback_ransac_iters: must be >= 1");
        }
        Ok(())
    }
}

/// Sparse matches from a detector-based matcher, in pixel coordinates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnchorMatchSet {
    pub matches: Vec<PointMatch>,
}

impl AnchorMatchSet {
    pub fn new(matches: Vec<PointMatch>) -> Self {
        Self { matches }
    }

    pub fn empty() -> Self {
        Self::default()
    }
}

/// Which data the initial fundamental matrix was fit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitSource {
    Anchors,
    TopHalf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub fundamental: [[f64; 3]; 3],
    pub match_count: usize,
    pub mean_sampson: Option<f64>,
    pub map_min: f64,
    pub map_max: f64,
}

/// One record for the initial state plus one per iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub records: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub matches: CoarseMatchSet,
    pub fundamental: FundamentalMatrix,
    pub trace: OptimizationTrace,
    pub init_source: InitSource,
}

/// Maps cell indices to cell-center pixel coordinates, keeping confidences.
pub fn matches_to_pixel(
    m: &CoarseMatchSet,
    grids: (&FeatureGrid, &FeatureGrid),
) -> Result<Vec<PointMatch>, MatchingError> {
    m.iter()
        .map(|c| {
            Ok(PointMatch::new(
                cell_to_pixel(c.a, grids.0)?,
                cell_to_pixel(c.b, grids.1)?,
                c.confidence,
            ))
        })
        .collect()
}

/// Fits the starting fundamental matrix.
///
/// Uses the normalized eight-point fit on anchors whose confidence exceeds
/// `min_anchor_confidence` when at least `min_anchor_count` exist. Otherwise
/// falls back to a seeded RANSAC fit on the most confident half of
/// `mnn_select(p0, θ_iter)`.
pub fn initialize_fundamental(
    anchors: &AnchorMatchSet,
    p0: &ConfidenceMap,
    grids: (&FeatureGrid, &FeatureGrid),
    cfg: &OptimizerConfig,
) -> Result<(FundamentalMatrix, InitSource), OptimizeError> {
    let good: Vec<PointMatch> = anchors
        .matches
        .iter()
        .filter(|m| m.confidence > cfg.min_anchor_confidence)
        .copied()
        .collect();
    if good.len() >= cfg.min_anchor_count.max(8) {
        return Ok((normalized_eight_point(&good)?, InitSource::Anchors));
    }

    let mut selected = mnn_select(p0, cfg.theta_iter).matches;
    // Stable sort keeps A-index order among equal confidences.
    selected.sort_by(|x, y| {
        y.confidence
            .partial_cmp(&x.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    selected.truncate(selected.len().div_ceil(2));
    if selected.len() < 8 {
        return Err(OptimizeError::InitializationFailure {
            available: selected.len(),
        });
    }
    let top = matches_to_pixel(&CoarseMatchSet { matches: selected }, grids)?;
    let ransac = RansacConfig::new(cfg.tau, cfg.fallback_ransac_iters, cfg.seed);
    match ransac_fundamental(&top, &ransac) {
        Ok((f, _)) => Ok((f, InitSource::TopHalf)),
        Err(GeometryError::NoConsensus { best }) => {
            Err(OptimizeError::InitializationFailure { available: best })
        }
        Err(e) => Err(e.into()),
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `sigmoid(relu(τ − d))`; exactly 0.5 whenever `d ≥ τ`.
#[inline]
pub fn geometric_weight(d: f64, tau: f64) -> f64 {
    sigmoid((tau - d).max(0.0))
}

/// Dense geometric confidence over every cell pair, with the Sampson distance
/// evaluated at cell-center pixel coordinates. Pairs with a degenerate
/// denominator get 0.5.
pub fn geometric_confidence(
    f: &FundamentalMatrix,
    grids: (&FeatureGrid, &FeatureGrid),
    cfg: &OptimizerConfig,
) -> ConfidenceMap {
    let (ga, gb) = grids;
    let m = f.matrix();
    let mt = m.transpose();
    let center = |i: usize, g: &FeatureGrid| {
        let w = g.width();
        let s = g.cell_size_px();
        nalgebra::Vector3::new(((i % w) as f64 + 0.5) * s, ((i / w) as f64 + 0.5) * s, 1.0)
    };
    // Epipolar line of every A cell in B, and of every B cell in A.
    let a_terms: Vec<_> = (0..ga.num_cells())
        .map(|i| {
            let a = center(i, ga);
            (a, m * a)
        })
        .collect();
    let b_terms: Vec<_> = (0..gb.num_cells())
        .map(|j| {
            let b = center(j, gb);
            (b, mt * b)
        })
        .collect();

    let cols = gb.num_cells();
    let tau = cfg.tau;
    let mut values = vec![0.0; ga.num_cells() * cols];
    values
        .par_chunks_mut(cols.max(1))
        .zip(a_terms.par_iter())
        .for_each(|(row, (a, fa))| {
            let qa = fa.x * fa.x + fa.y * fa.y;
            for (out, (b, ftb)) in row.iter_mut().zip(&b_terms) {
                let r = 0.5 * (b.dot(fa) + a.dot(ftb));
                let den = qa + ftb.x * ftb.x + ftb.y * ftb.y;
                *out = if den < DEGENERATE_DENOMINATOR {
                    0.5
                } else {
                    geometric_weight(r * r / den, tau)
                };
            }
        });
    ConfidenceMap::from_parts(ga.num_cells(), cols, values)
}

/// `p_prev · p_d · w` before normalization.
pub(crate) fn weighted_product(p_prev: &ConfidenceMap, p_d: &ConfidenceMap, w: f64) -> Vec<f64> {
    p_prev
        .values()
        .iter()
        .zip(p_d.values())
        .map(|(&p, &d)| p * d * w)
        .collect()
}

/// Reweights by the geometric confidence and min-max normalizes the full map.
pub fn update_confidence(
    p_prev: &ConfidenceMap,
    p_d: &ConfidenceMap,
    w: f64,
) -> Result<ConfidenceMap, MatchingError> {
    p_prev.same_shape(p_d)?;
    let mut out = ConfidenceMap::from_parts(
        p_prev.rows(),
        p_prev.cols(),
        weighted_product(p_prev, p_d, w),
    );
    minmax_normalize_in_place(out.values_mut());
    Ok(out)
}

fn record(
    iteration: usize,
    f: &FundamentalMatrix,
    selected: &[PointMatch],
    p: &ConfidenceMap,
) -> IterationRecord {
    let distances: Vec<f64> = selected
        .iter()
        .filter_map(|m| sampson_distance(f, &m.a, &m.b).ok())
        .collect();
    let mean_sampson =
        (!distances.is_empty()).then(|| distances.iter().sum::<f64>() / distances.len() as f64);
    let (map_min, map_max) = p.min_max();
    IterationRecord {
        iteration,
        fundamental: f.to_rows(),
        match_count: selected.len(),
        mean_sampson,
        map_min,
        map_max,
    }
}

/// Runs the full optimization for one image pair.
pub fn optimize(
    grids: (&FeatureGrid, &FeatureGrid),
    anchors: &AnchorMatchSet,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult, OptimizeError> {
    cfg.validate()?;
    let s = similarity(grids.0, grids.1)?;
    let mut p = dual_softmax(&s, cfg.temperature)?;
    drop(s);

    let (mut f, init_source) = initialize_fundamental(anchors, &p, grids, cfg)?;
    let selected = matches_to_pixel(&mnn_select(&p, cfg.theta_iter), grids)?;
    let mut trace = OptimizationTrace {
        records: vec![record(0, &f, &selected, &p)],
    };

    for iteration in 1..=cfg.iterations {
        let p_d = geometric_confidence(&f, grids, cfg);
        p = update_confidence(&p, &p_d, cfg.weight)?;
        drop(p_d);
        let selected = matches_to_pixel(&mnn_select(&p, cfg.theta_iter), grids)?;
        if cfg.refit_each_iteration {
            let consistent: Vec<PointMatch> = selected
                .iter()
                .filter(|m| sampson_distance(&f, &m.a, &m.b).is_ok_and(|d| d < cfg.tau))
                .copied()
                .collect();
            // Too few or degenerate consistent matches keep the previous model.
            if consistent.len() >= 8 {
                if let Ok(refit) = normalized_eight_point(&consistent) {
                    f = refit;
                }
            }
        }
        trace.records.push(record(iteration, &f, &selected, &p));
    }

    Ok(OptimizationResult {
        matches: mnn_select(&p, cfg.theta_final),
        fundamental: f,
        trace,
        init_source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    #[test]
    fn geometric_weight_boundaries() {
        assert_eq!(geometric_weight(10.0, 10.0), 0.5);
        assert_eq!(geometric_weight(25.0, 10.0), 0.5);
        let expected = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((geometric_weight(0.0, 10.0) - expected).abs() < 1e-15);
        assert!((geometric_weight(0.0, 10.0) - 0.9999546).abs() < 1e-7);
    }

    #[test]
    fn weighted_product_before_normalization() {
        let p = ConfidenceMap::new(1, 1, vec![0.6]).unwrap();
        let d = ConfidenceMap::new(1, 1, vec![0.5]).unwrap();
        assert!((weighted_product(&p, &d, 1.2)[0] - 0.36).abs() < 1e-15);
    }

    #[test]
    fn constant_geometric_map_cancels_under_normalization() {
        let p = ConfidenceMap::new(2, 2, vec![0.1, 0.4, 0.3, 0.9]).unwrap();
        let d = ConfidenceMap::new(2, 2, vec![0.7; 4]).unwrap();
        let out = update_confidence(&p, &d, 1.2).unwrap();
        let expected = crate::dense::minmax_normalize(&p);
        for (x, y) in out.values().iter().zip(expected.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn update_rejects_shape_mismatch() {
        let p = ConfidenceMap::new(1, 2, vec![0.1, 0.2]).unwrap();
        let d = ConfidenceMap::new(2, 1, vec![0.1, 0.2]).unwrap();
        assert!(matches!(
            update_confidence(&p, &d, 1.2),
            Err(MatchingError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn config_validation_names_fields() {
        let cfg = OptimizerConfig {
            tau: -1.0,
            ..Default::default()
        };
        assert!(
            matches!(cfg.validate(), Err(OptimizeError::InvalidConfig(m)) if m.starts_with("tau"))
        );
        let cfg = OptimizerConfig {
            theta_iter: 0.5,
            theta_final: 0.2,
            ..Default::default()
        };
        assert!(
            matches!(cfg.validate(), Err(OptimizeError::InvalidConfig(m)) if m.starts_with("theta_iter"))
        );
        OptimizerConfig::default().validate().unwrap();
    }

    #[test]
    fn degenerate_fundamental_gives_half() {
        let g = FeatureGrid::new(2, 2, 1, 8.0, vec![1.0; 4]).unwrap();
        let f = FundamentalMatrix::raw(Matrix3::zeros());
        let p_d = geometric_confidence(&f, (&g, &g), &OptimizerConfig::default());
        assert!(p_d.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn matches_to_pixel_maps_centers() {
        let g = FeatureGrid::new(2, 2, 1, 8.0, vec![1.0; 4]).unwrap();
        let set = CoarseMatchSet {
            matches: vec![crate::dense::CoarseMatch {
                a: 0,
                b: 0,
                confidence: 0.7,
            }],
        };
        let px = matches_to_pixel(&set, (&g, &g)).unwrap();
        assert_eq!(px, vec![PointMatch::from_coords(4.0, 4.0, 4.0, 4.0, 0.7)]);
        assert!(matches_to_pixel(&CoarseMatchSet::default(), (&g, &g))
            .unwrap()
            .is_empty());
        let bad = CoarseMatchSet {
            matches: vec![crate::dense::CoarseMatch {
                a: 9,
                b: 0,
                confidence: 0.7,
            }],
        };
        assert!(matches_to_pixel(&bad, (&g, &g)).is_err());
    }
}
