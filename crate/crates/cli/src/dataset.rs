//! On-disk dataset layout.
//!
//! ```text
//! manifest.json
//! views/<view>.json          pose, intrinsics, image size, grid paths
//! views/<view>.coarse.grid   GMGRID01
//! views/<view>.fine.grid     GMGRID01
//! pairs/<pair>.anchors.csv   simulated detector matches
//! pairs/<pair>.gt.csv        exact projections of co-visible points
//! ```
//!
//! View A depends only on the scene seed, so pairs that share a seed share
//! one view A file.

use std::path::{Path, PathBuf};

use geomatch_core::dense::FeatureGrid;
use geomatch_core::geometry::{CameraIntrinsics, CameraPose, PointMatch};
use geomatch_core::synth::{SweepVariable, ViewpointParams};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::config::SynthConfig;
use crate::error::{read_text, write_file, CliError, Result};
use crate::grid_io::read_grid;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneRecord {
    pub normal: [f64; 3],
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub pair_id: String,
    pub variable: SweepVariable,
    pub offset: f64,
    pub scene_seed: u64,
    pub view_a: String,
    pub view_b: String,
    pub params_a: ViewpointParams,
    pub params_b: ViewpointParams,
    pub anchors: String,
    pub gt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    /// `SOURCE_DATE_EPOCH` when set, else 0, so reruns stay byte-identical.
    pub created_unix: u64,
    pub synth: SynthConfig,
    /// Scene plane for homography evaluation; only set for planar scenes.
    pub plane: Option<PlaneRecord>,
    pub pairs: Vec<PairRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewRecord {
    pub view_id: String,
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics,
    /// World-to-camera rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub params: Option<ViewpointParams>,
    pub coarse_cell_px: usize,
    pub fine_cell_px: usize,
    pub coarse_grid: String,
    pub fine_grid: String,
}

impl ViewRecord {
    pub fn pose(&self) -> Result<CameraPose> {
        let r = Matrix3::from_fn(|i, j| self.rotation[i][j]);
        let t = Vector3::from(self.translation);
        CameraPose::new(r, t).map_err(|e| CliError::Format(format!("view {}: {e}", self.view_id)))
    }

    pub fn pose_fields(pose: &CameraPose) -> ([[f64; 3]; 3], [f64; 3]) {
        let r = &pose.rotation;
        (
            [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            [pose.translation.x, pose.translation.y, pose.translation.z],
        )
    }
}

pub struct LoadedView {
    pub record: ViewRecord,
    pub pose: CameraPose,
    pub coarse: FeatureGrid,
    pub fine: FeatureGrid,
}

pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

pub fn view_path(view_id: &str) -> String {
    format!("views/{view_id}.json")
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_str(&read_text(&path)?)
            .map_err(|e| CliError::format(&path, e))?;
        if manifest.schema_version != DATASET_SCHEMA_VERSION {
            return Err(CliError::format(
                &path,
                format!("unsupported schema_version {}", manifest.schema_version),
            ));
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn view_record(&self, rel: &str) -> Result<ViewRecord> {
        let path = self.path(rel);
        serde_json::from_str(&read_text(&path)?).map_err(|e| CliError::format(&path, e))
    }

    pub fn load_view(&self, rel: &str) -> Result<LoadedView> {
        let record = self.view_record(rel)?;
        let pose = record.pose()?;
        let coarse = read_grid(&self.path(&record.coarse_grid), record.coarse_cell_px as f64)?;
        let fine = read_grid(&self.path(&record.fine_grid), record.fine_cell_px as f64)?;
        Ok(LoadedView {
            record,
            pose,
            coarse,
            fine,
        })
    }

    pub fn read_points(&self, rel: &str) -> Result<Vec<PointMatch>> {
        read_point_csv(&self.path(rel))
    }
}

const POINT_HEADER: [&str; 5] = ["ax", "ay", "bx", "by", "confidence"];

pub fn write_point_csv(path: &Path, matches: &[PointMatch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| CliError::format(path, e);
    w.write_record(POINT_HEADER).map_err(ser)?;
    for m in matches {
        w.write_record([m.a.x, m.a.y, m.b.x, m.b.y, m.confidence].map(|v| v.to_string()))
            .map_err(ser)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::format(path, e))?;
    write_file(path, &bytes)
}

pub fn read_point_csv(path: &Path) -> Result<Vec<PointMatch>> {
    let text = read_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| CliError::format(path, e))?.clone();
    if header.iter().ne(POINT_HEADER) {
        return Err(CliError::format(path, "expected header ax,ay,bx,by,confidence"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::format(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut v = [0.0; 5];
        for (slot, field) in v.iter_mut().zip(rec.iter()) {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::format(path, format!("line {line}: bad number `{field}`")))?;
        }
        out.push(PointMatch::from_coords(v[0], v[1], v[2], v[3], v[4]));
    }
    Ok(out)
}
