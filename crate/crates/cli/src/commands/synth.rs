use std::collections::BTreeMap;
use std::path::Path;

use geomatch_core::synth::{
    build_planar_scene, build_scene, derive_seed, gt_point_matches, make_pair_sweep, render_view,
    synthesize_anchors, RenderedView, SweepPair,
};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SceneLayout};
use crate::dataset::{
    view_path, write_point_csv, Manifest, PairRecord, PlaneRecord, ViewRecord, DATASET_SCHEMA_VERSION,
    MANIFEST_FILE,
};
use crate::error::{create_dir, write_file, CliError, Result};
use crate::grid_io::write_grid;

pub struct SynthOptions {
    pub seed: Option<u64>,
    pub paper_scale: bool,
}

fn view_a_id(scene_seed: u64) -> String {
    format!("a_{scene_seed:020}")
}

fn view_b_id(pair_id: &str) -> String {
    format!("b_{pair_id}")
}

fn created_unix() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

fn write_view(out: &Path, id: &str, view: &RenderedView, cfg: &ExperimentConfig) -> Result<()> {
    let coarse_grid = format!("views/{id}.coarse.grid");
    let fine_grid = format!("views/{id}.fine.grid");
    write_grid(&out.join(&coarse_grid), &view.coarse)?;
    write_grid(&out.join(&fine_grid), &view.fine)?;
    let (rotation, translation) = ViewRecord::pose_fields(&view.pose);
    let record = ViewRecord {
        view_id: id.to_string(),
        width: view.width,
        height: view.height,
        intrinsics: view.intrinsics,
        rotation,
        translation,
        params: view.params,
        coarse_cell_px: cfg.synth.render.coarse_cell_px,
        fine_cell_px: cfg.synth.render.fine_cell_px,
        coarse_grid,
        fine_grid,
    };
    let json = serde_json::to_string_pretty(&record).expect("view record serializes");
    write_file(&out.join(view_path(id)), json.as_bytes())
}

/// Builds the scene for one seed, renders its shared view A and every view B
/// that uses it, and writes all of their files.
fn synth_seed_group(out: &Path, cfg: &ExperimentConfig, seed: u64, pairs: &[&SweepPair]) -> Result<()> {
    let s = &cfg.synth;
    let compute = |e: geomatch_core::synth::SynthError| CliError::Compute(format!("scene seed {seed}: {e}"));
    let scene = match s.layout {
        SceneLayout::Corner => build_scene(s.n_points, s.ambiguity_fraction, s.descriptor_dim, seed),
        SceneLayout::Plane => build_planar_scene(s.n_points, s.ambiguity_fraction, s.descriptor_dim, seed),
    }
    .map_err(compute)?;
    let view_a = render_view(&scene, &s.sweep.base, &s.render, s.noise_sigma, derive_seed(seed, 1))
        .map_err(compute)?;
    write_view(out, &view_a_id(seed), &view_a, cfg)?;
    for p in pairs {
        let view_b = render_view(&scene, &p.view_b, &s.render, s.noise_sigma, derive_seed(seed, 2))
            .map_err(compute)?;
        write_view(out, &view_b_id(&p.pair_id), &view_b, cfg)?;
        let anchors = synthesize_anchors(&view_a, &view_b, &s.anchors, seed).map_err(compute)?;
        write_point_csv(&out.join(format!("pairs/{}.anchors.csv", p.pair_id)), &anchors)?;
        let gt = gt_point_matches(&view_a, &view_b);
        write_point_csv(&out.join(format!("pairs/{}.gt.csv", p.pair_id)), &gt)?;
    }
    Ok(())
}

pub fn run(config: Option<&Path>, out: &Path, opts: &SynthOptions) -> Result<Manifest> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = opts.seed {
        cfg.synth.seed = seed;
    }
    if opts.paper_scale {
        cfg.synth.paper_scale();
    }
    cfg.validate()?;
    let s = &cfg.synth;
    let pairs = make_pair_sweep(&s.sweep, s.seed).map_err(|e| CliError::Config(format!("synth.{e}")))?;

    create_dir(out)?;
    create_dir(&out.join("views"))?;
    create_dir(&out.join("pairs"))?;

    let mut groups: BTreeMap<u64, Vec<&SweepPair>> = BTreeMap::new();
    for p in &pairs {
        groups.entry(p.scene_seed).or_default().push(p);
    }
    let groups: Vec<(u64, Vec<&SweepPair>)> = groups.into_iter().collect();
    groups
        .par_iter()
        .map(|(seed, group)| synth_seed_group(out, &cfg, *seed, group))
        .collect::<Vec<Result<()>>>()
        .into_iter()
        .collect::<Result<()>>()?;

    let plane = match s.layout {
        SceneLayout::Plane => Some(PlaneRecord {
            normal: [0.0, 0.0, 1.0],
            offset: 0.0,
        }),
        SceneLayout::Corner => None,
    };
    let manifest = Manifest {
        schema_version: DATASET_SCHEMA_VERSION,
        seed: s.seed,
        created_unix: created_unix(),
        synth: s.clone(),
        plane,
        pairs: pairs
            .iter()
            .map(|p| PairRecord {
                pair_id: p.pair_id.clone(),
                variable: s.sweep.variable,
                offset: p.offset,
                scene_seed: p.scene_seed,
                view_a: view_path(&view_a_id(p.scene_seed)),
                view_b: view_path(&view_b_id(&p.pair_id)),
                params_a: p.view_a,
                params_b: p.view_b,
                anchors: format!("pairs/{}.anchors.csv", p.pair_id),
                gt: format!("pairs/{}.gt.csv", p.pair_id),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&out.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}
