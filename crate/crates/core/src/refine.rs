//! Correlation-window refinement of coarse matches.
//!
//! The A-side point stays at the coarse cell center. On the B side, the
//! descriptor sampled at the A center is correlated against a `window ×
//! window` neighbourhood of fine-grid samples around the B cell center, and
//! the refined point is the softmax-weighted expectation of the offsets.
//! Window samples falling outside the fine grid are dropped and the softmax
//! renormalized over the rest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::{cell_to_pixel, CoarseMatchSet, FeatureGrid, MatchingError};
use crate::geometry::{HomogeneousPoint2, PointMatch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("fine grid does not cover the coarse grid: {0}")]
    CoverageMismatch(String),
    #[error("invalid refinement config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Matching(#[from] MatchingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementConfig {
    /// Odd side length of the search window, in fine cells.
    pub window: usize,
    pub fine_cell_size_px: f64,
    pub temperature: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            window: 5,
            fine_cell_size_px: 2.0,
            temperature: 0.1,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(RefineError::InvalidConfig(format!(
                "window: must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.fine_cell_size_px > 0.0) {
            return Err(RefineError::InvalidConfig(
                "fine_cell_size_px: must be > 0".into(),
            ));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(RefineError::InvalidConfig(
                "temperature: must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedMatch {
    pub a: HomogeneousPoint2,
    pub b: HomogeneousPoint2,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinedMatchSet {
    pub matches: Vec<RefinedMatch>,
}

impl RefinedMatchSet {
    pub fn to_point_matches(&self) -> Vec<PointMatch> {
        self.matches
            .iter()
            .map(|m| PointMatch::new(m.a, m.b, m.confidence))
            .collect()
    }
}

/// Bilinearly interpolated, re-normalized descriptor at pixel `(x, y)`;
/// `None` outside the grid extent.
pub fn sample_descriptor(grid: &FeatureGrid, x: f64, y: f64) -> Option<Vec<f64>> {
    let (ext_w, ext_h) = grid.extent_px();
    if !(x >= 0.0 && y >= 0.0 && x <= ext_w && y <= ext_h) {
        return None;
    }
    let s = grid.cell_size_px();
    let max_u = (grid.width() - 1) as f64;
    let max_v = (grid.height() - 1) as f64;
    let u = (x / s - 0.5).clamp(0.0, max_u);
    let v = (y / s - 0.5).clamp(0.0, max_v);
    let (u0, v0) = (u.floor(), v.floor());
    let (fu, fv) = (u - u0, v - v0);
    let (u0, v0) = (u0 as usize, v0 as usize);
    let u1 = (u0 + 1).min(grid.width() - 1);
    let v1 = (v0 + 1).min(grid.height() - 1);
    let taps = [
        (v0 * grid.width() + u0, (1.0 - fu) * (1.0 - fv)),
        (v0 * grid.width() + u1, fu * (1.0 - fv)),
        (v1 * grid.width() + u0, (1.0 - fu) * fv),
        (v1 * grid.width() + u1, fu * fv),
    ];
    let mut out = vec![0.0; grid.dim()];
    for (cell, w) in taps {
        if w == 0.0 {
            continue;
        }
        for (o, &d) in out.iter_mut().zip(grid.descriptor(cell)) {
            *o += w * d as f64;
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    Some(out)
}

/// Softmax expectation of window offsets (in fine cells) weighted by
/// `correlation / temperature`. Returns `None` for an empty window.
pub fn window_expectation(entries: &[(f64, f64, f64)], temperature: f64) -> Option<(f64, f64)> {
    let max = entries
        .iter()
        .map(|e| e.2 / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut sum = 0.0;
    let mut ex = 0.0;
    let mut ey = 0.0;
    for &(dx, dy, c) in entries {
        let w = (c / temperature - max).exp();
        sum += w;
        ex += w * dx;
        ey += w * dy;
    }
    Some((ex / sum, ey / sum))
}

fn check_coverage(coarse: &FeatureGrid, fine: &FeatureGrid, side: &str) -> Result<(), RefineError> {
    let (cw, ch) = coarse.extent_px();
    let (fw, fh) = fine.extent_px();
    if (cw - fw).abs() > 1e-9 || (ch - fh).abs() > 1e-9 {
        return Err(RefineError::CoverageMismatch(format!(
            "{side}: coarse extent {cw}x{ch} px vs fine extent {fw}x{fh} px"
        )));
    }
    Ok(())
}

/// Refines every coarse match to sub-pixel accuracy on the B side.
pub fn refine(
    coarse: &CoarseMatchSet,
    coarse_grids: (&FeatureGrid, &FeatureGrid),
    fine_grids: (&FeatureGrid, &FeatureGrid),
    cfg: &RefinementConfig,
) -> Result<RefinedMatchSet, RefineError> {
    cfg.validate()?;
    let (fine_a, fine_b) = fine_grids;
    check_coverage(coarse_grids.0, fine_a, "A")?;
    check_coverage(coarse_grids.1, fine_b, "B")?;
    for (g, side) in [(fine_a, "A"), (fine_b, "B")] {
        if (g.cell_size_px() - cfg.fine_cell_size_px).abs() > 1e-12 {
            return Err(RefineError::CoverageMismatch(format!(
                "{side}: fine cell size {} px, config expects {} px",
                g.cell_size_px(),
                cfg.fine_cell_size_px
            )));
        }
    }
    if fine_a.dim() != fine_b.dim() {
        return Err(MatchingError::DimensionMismatch {
            a: fine_a.dim(),
            b: fine_b.dim(),
        }
        .into());
    }

    let half = (cfg.window / 2) as i64;
    let step = cfg.fine_cell_size_px;
    let mut entries = Vec::with_capacity(cfg.window * cfg.window);
    let mut out = Vec::with_capacity(coarse.len());
    for m in coarse.iter() {
        let pa = cell_to_pixel(m.a, coarse_grids.0)?;
        let pb = cell_to_pixel(m.b, coarse_grids.1)?;
        let da = sample_descriptor(fine_a, pa.x, pa.y).ok_or_else(|| {
            RefineError::CoverageMismatch(format!(
                "A center ({}, {}) outside fine grid",
                pa.x, pa.y
            ))
        })?;
        entries.clear();
        for dy in -half..=half {
            for dx in -half..=half {
                let x = pb.x + dx as f64 * step;
                let y = pb.y + dy as f64 * step;
                if let Some(db) = sample_descriptor(fine_b, x, y) {
                    let corr: f64 = da.iter().zip(&db).map(|(p, q)| p * q).sum();
                    entries.push((dx as f64, dy as f64, corr));
                }
            }
        }
        let (ex, ey) = window_expectation(&entries, cfg.temperature).unwrap_or((0.0, 0.0));
        out.push(RefinedMatch {
            a: pa,
            b: HomogeneousPoint2::new(pb.x + ex * step, pb.y + ey * step),
            confidence: m.confidence,
        });
    }
    Ok(RefinedMatchSet { matches: out })
}
