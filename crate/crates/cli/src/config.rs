//! Experiment configuration: a single JSON document with a schema version.
//! Unknown keys are rejected everywhere.

use std::path::Path;

use geomatch_core::optimizer::OptimizerConfig;
use geomatch_core::refine::RefinementConfig;
use geomatch_core::synth::{AnchorSettings, PairSweepSpec, RenderSettings, SweepVariable};
use serde::{Deserialize, Serialize};

use crate::error::{read_text, CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneLayout {
    /// Three inner faces of a box corner.
    Corner,
    /// A single plane, for homography evaluation.
    Plane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub layout: SceneLayout,
    pub n_points: usize,
    pub ambiguity_fraction: f64,
    pub noise_sigma: f64,
    pub descriptor_dim: usize,
    pub render: RenderSettings,
    pub sweep: PairSweepSpec,
    pub anchors: AnchorSettings,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let mut sweep = PairSweepSpec::new(SweepVariable::Beta);
        sweep.step = 5.0;
        sweep.pairs_per_step = 5;
        Self {
            seed: 0,
            layout: SceneLayout::Corner,
            n_points: 1500,
            ambiguity_fraction: 0.3,
            noise_sigma: 0.05,
            descriptor_dim: 64,
            render: RenderSettings {
                long_side: 416,
                ..RenderSettings::default()
            },
            sweep,
            anchors: AnchorSettings::default(),
        }
    }
}

impl SynthConfig {
    /// Restores the full protocol: every integer offset, 25 pairs each.
    pub fn paper_scale(&mut self) {
        self.sweep.step = 1.0;
        self.sweep.pairs_per_step = 25;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub precision_threshold: f64,
    pub pose_auc_thresholds_deg: Vec<f64>,
    pub homography_auc_thresholds_px: Vec<f64>,
    /// Sampson inlier threshold (squared pixels) for pose estimation.
    pub pose_ransac_threshold: f64,
    /// Reprojection inlier threshold (pixels) for homography estimation.
    pub homography_ransac_threshold: f64,
    pub ransac_iters: usize,
    pub ransac_seed: u64,
    /// Track quantization bin; defaults to the coarse cell size.
    pub quantize_px: Option<f64>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            precision_threshold: 1e-4,
            pose_auc_thresholds_deg: vec![5.0, 10.0, 20.0],
            homography_auc_thresholds_px: vec![3.0, 5.0, 10.0],
            pose_ransac_threshold: 1.0,
            homography_ransac_threshold: 3.0,
            ransac_iters: 2000,
            ransac_seed: 0,
            quantize_px: None,
        }
    }
}

/// Matching pipelines to run. `gt` copies the ground-truth projections and
/// is meant as an evaluation sanity check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodToggles {
    pub baseline: bool,
    pub geo: bool,
    pub geo_anchors: bool,
    pub anchors_concat: bool,
    pub gt: bool,
}

impl Default for MethodToggles {
    fn default() -> Self {
        Self {
            baseline: true,
            geo: true,
            geo_anchors: true,
            anchors_concat: true,
            gt: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Baseline,
    Geo,
    GeoAnchors,
    AnchorsConcat,
    Gt,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Baseline,
        Method::Geo,
        Method::GeoAnchors,
        Method::AnchorsConcat,
        Method::Gt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Geo => "geo",
            Method::GeoAnchors => "geo+anchors",
            Method::AnchorsConcat => "anchors-concat",
            Method::Gt => "gt",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl MethodToggles {
    pub fn enabled(&self) -> Vec<Method> {
        Method::ALL
            .into_iter()
            .filter(|m| match m {
                Method::Baseline => self.baseline,
                Method::Geo => self.geo,
                Method::GeoAnchors => self.geo_anchors,
                Method::AnchorsConcat => self.anchors_concat,
                Method::Gt => self.gt,
            })
            .collect()
    }

    /// Parses a comma-separated method list such as `baseline,geo+anchors`.
    pub fn from_list(list: &str) -> Result<Self> {
        let mut t = MethodToggles {
            baseline: false,
            geo: false,
            geo_anchors: false,
            anchors_concat: false,
            gt: false,
        };
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match Method::parse(name) {
                Some(Method::Baseline) => t.baseline = true,
                Some(Method::Geo) => t.geo = true,
                Some(Method::GeoAnchors) => t.geo_anchors = true,
                Some(Method::AnchorsConcat) => t.anchors_concat = true,
                Some(Method::Gt) => t.gt = true,
                None => {
                    return Err(CliError::Config(format!(
                        "--methods: unknown method `{name}` (expected baseline, geo, geo+anchors, anchors-concat or gt)"
                    )))
                }
            }
        }
        if t.enabled().is_empty() {
            return Err(CliError::Config("--methods: no method selected".into()));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub synth: SynthConfig,
    /// Also holds the dual-softmax temperature shared by every method.
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub refinement: RefinementConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub methods: MethodToggles,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            synth: SynthConfig::default(),
            optimizer: OptimizerConfig::default(),
            refinement: RefinementConfig::default(),
            evaluation: EvaluationConfig::default(),
            methods: MethodToggles::default(),
        }
    }
}

fn check(cond: bool, field: &str, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(format!("{field}: {msg}")))
    }
}

fn check_thresholds(t: &[f64], field: &str) -> Result<()> {
    check(
        !t.is_empty() && t.iter().all(|v| *v > 0.0 && v.is_finite()) && t.windows(2).all(|w| w[0] < w[1]),
        field,
        "must be a non-empty ascending list of positive numbers",
    )
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::from_json(&read_text(p)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check(
            self.schema_version == SCHEMA_VERSION,
            "schema_version",
            &format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
        )?;
        let s = &self.synth;
        check(s.n_points >= 8, "synth.n_points", "must be >= 8")?;
        check(
            (0.0..1.0).contains(&s.ambiguity_fraction),
            "synth.ambiguity_fraction",
            "must lie in [0, 1)",
        )?;
        check(s.noise_sigma >= 0.0 && s.noise_sigma.is_finite(), "synth.noise_sigma", "must be >= 0")?;
        check(s.descriptor_dim >= 1, "synth.descriptor_dim", "must be >= 1")?;
        s.render
            .validate()
            .map_err(|e| CliError::Config(format!("synth.render.{}", strip_prefix(&e.to_string()))))?;
        s.sweep
            .validate()
            .map_err(|e| CliError::Config(format!("synth.{}", strip_prefix(&e.to_string()))))?;
        check(
            s.anchors.pixel_noise >= 0.0 && s.anchors.outlier_fraction >= 0.0,
            "synth.anchors",
            "pixel_noise and outlier_fraction must be >= 0",
        )?;
        self.optimizer
            .validate()
            .map_err(|e| CliError::Config(format!("optimizer.{}", strip_prefix(&e.to_string()))))?;
        self.refinement
            .validate()
            .map_err(|e| CliError::Config(format!("refinement.{}", strip_prefix(&e.to_string()))))?;
        check(
            (self.refinement.fine_cell_size_px - s.render.fine_cell_px as f64).abs() < 1e-12,
            "refinement.fine_cell_size_px",
            "must equal synth.render.fine_cell_px",
        )?;
        let e = &self.evaluation;
        check(e.precision_threshold > 0.0, "evaluation.precision_threshold", "must be > 0")?;
        check_thresholds(&e.pose_auc_thresholds_deg, "evaluation.pose_auc_thresholds_deg")?;
        check_thresholds(&e.homography_auc_thresholds_px, "evaluation.homography_auc_thresholds_px")?;
        check(e.pose_ransac_threshold > 0.0, "evaluation.pose_ransac_threshold", "must be > 0")?;
        check(
            e.homography_ransac_threshold > 0.0,
            "evaluation.homography_ransac_threshold",
            "must be > 0",
        )?;
        check(e.ransac_iters >= 1, "evaluation.ransac_iters", "must be >= 1")?;
        check(
            e.quantize_px.map_or(true, |q| q > 0.0),
            "evaluation.quantize_px",
            "must be > 0",
        )?;
        check(!self.methods.enabled().is_empty(), "methods", "enable at least one method")?;
        Ok(())
    }
}

/// Drops the "invalid ... config: " lead-in of core validation errors so the
/// remaining text starts with the field name.
fn strip_prefix(msg: &str) -> &str {
    msg.split_once(": ").map_or(msg, |(_, rest)| rest)
}
