//! `eval`: turns match files into metric reports.

use std::collections::BTreeMap;
use std::path::Path;

use geomatch_core::eval::{
    auc, build_tracks, estimate_pose_from_matches, homography_auc, image_corners, matching_precision,
    pose_error, track_stats,
};
use geomatch_core::geometry::{fundamental_from_poses, plane_homography, PointMatch, RansacConfig};
use nalgebra::Vector3;
use rayon::prelude::*;

use crate::commands::matching::{RunRecord, MATCH_HEADER, RUN_FILE};
use crate::config::{ExperimentConfig, Method};
use crate::dataset::{Dataset, PairRecord, ViewRecord};
use crate::error::{create_dir, read_text, write_file, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    Precision,
    PoseAuc,
    HomographyAuc,
    Tracks,
}

/// Matches of one pair, keyed by method name.
pub type PairMatches = BTreeMap<String, Vec<PointMatch>>;

pub fn read_match_file(path: &Path, pair_id: &str) -> Result<PairMatches> {
    let text = read_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| CliError::format(path, e))?.clone();
    if header.iter().ne(MATCH_HEADER) {
        return Err(CliError::format(path, format!("expected header {}", MATCH_HEADER.join(","))));
    }
    let mut out = PairMatches::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::format(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if &rec[0] != pair_id {
            return Err(CliError::format(path, format!("line {line}: pair id `{}` does not match", &rec[0])));
        }
        let mut v = [0.0; 5];
        for (k, slot) in v.iter_mut().enumerate() {
            let field = &rec[k + 1];
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::format(path, format!("line {line}: bad number `{field}`")))?;
        }
        let method = &rec[6];
        if Method::parse(method).is_none() {
            return Err(CliError::format(path, format!("line {line}: unknown method `{method}`")));
        }
        out.entry(method.to_string())
            .or_default()
            .push(PointMatch::from_coords(v[0], v[1], v[2], v[3], v[4]));
    }
    Ok(out)
}

struct Loaded<'a> {
    run: RunRecord,
    /// Pairs with match files, in manifest order.
    pairs: Vec<(&'a PairRecord, PairMatches)>,
}

fn load<'a>(ds: &'a Dataset, match_dir: &Path) -> Result<Loaded<'a>> {
    let run_path = match_dir.join(RUN_FILE);
    let run: RunRecord =
        serde_json::from_str(&read_text(&run_path)?).map_err(|e| CliError::format(&run_path, e))?;
    let by_id: BTreeMap<&str, &PairRecord> =
        ds.manifest.pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
    for id in &run.pairs {
        if !by_id.contains_key(id.as_str()) {
            return Err(CliError::Format(format!(
                "{}: pair `{id}` is not in the dataset manifest",
                run_path.display()
            )));
        }
    }
    let wanted: std::collections::BTreeSet<&str> = run.pairs.iter().map(String::as_str).collect();
    let mut pairs = Vec::new();
    for p in &ds.manifest.pairs {
        if !wanted.contains(p.pair_id.as_str()) {
            continue;
        }
        let path = match_dir.join(format!("matches/{}.csv", p.pair_id));
        pairs.push((p, read_match_file(&path, &p.pair_id)?));
    }
    if pairs.is_empty() {
        return Err(CliError::MissingInput(format!(
            "{}: no successfully matched pairs",
            match_dir.join("matches").display()
        )));
    }
    Ok(Loaded { run, pairs })
}

struct PairGeometry {
    a: ViewRecord,
    b: ViewRecord,
}

fn geometry_of(ds: &Dataset, p: &PairRecord) -> Result<PairGeometry> {
    Ok(PairGeometry {
        a: ds.view_record(&p.view_a)?,
        b: ds.view_record(&p.view_b)?,
    })
}

fn methods(run: &RunRecord) -> Vec<&str> {
    run.methods.iter().map(String::as_str).collect()
}

fn matches_of<'m>(pm: &'m PairMatches, method: &str) -> &'m [PointMatch] {
    pm.get(method).map_or(&[], Vec::as_slice)
}

struct Report {
    comments: Vec<String>,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Report {
    fn render(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for c in &self.comments {
            out.extend_from_slice(format!("# {c}\n").as_bytes());
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }
}

fn precision_report(ds: &Dataset, l: &Loaded, cfg: &ExperimentConfig) -> Result<Report> {
    let t = cfg.evaluation.precision_threshold;
    let per_pair: Vec<Vec<f64>> = l
        .pairs
        .par_iter()
        .map(|(p, pm)| {
            let g = geometry_of(ds, p)?;
            let f = fundamental_from_poses(&g.a.pose()?, &g.b.pose()?, &g.a.intrinsics, &g.b.intrinsics)
                .map_err(|e| CliError::Compute(format!("{}: {e}", p.pair_id)))?;
            Ok(methods(&l.run)
                .iter()
                .map(|m| matching_precision(matches_of(pm, m), &f, &g.a.intrinsics, &g.b.intrinsics, t))
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (k, method) in methods(&l.run).into_iter().enumerate() {
        // Offsets are compared by their bit patterns, which are exact copies
        // of the manifest values.
        let mut groups: BTreeMap<(String, u64), (f64, f64, usize)> = BTreeMap::new();
        for ((p, _), values) in l.pairs.iter().zip(&per_pair) {
            let key = (p.variable.to_string(), ordered_bits(p.offset));
            let e = groups.entry(key).or_insert((p.offset, 0.0, 0));
            e.1 += values[k];
            e.2 += 1;
        }
        for ((variable, _), (offset, sum, n)) in groups {
            rows.push(vec![
                method.to_string(),
                variable,
                offset.to_string(),
                (sum / n as f64).to_string(),
                n.to_string(),
            ]);
        }
    }
    Ok(Report {
        comments: vec![
            "metric: precision".into(),
            format!(
                "precision: mean over pairs of the fraction of matches with symmetric epipolar error < {t} in normalized coordinates"
            ),
            "columns: method, swept variable, offset, mean precision, number of pairs".into(),
        ],
        header: vec!["method", "variable", "offset", "precision", "pairs"],
        rows,
    })
}

/// Maps a finite float to a key whose integer order matches numeric order.
fn ordered_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn ransac(cfg: &ExperimentConfig, threshold: f64) -> RansacConfig {
    RansacConfig::new(threshold, cfg.evaluation.ransac_iters, cfg.evaluation.ransac_seed)
}

fn auc_rows(
    l: &Loaded,
    errors: &[Vec<f64>],
    thresholds: &[f64],
) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    for (k, method) in methods(&l.run).into_iter().enumerate() {
        let e: Vec<f64> = errors.iter().map(|v| v[k]).collect();
        let values = auc(&e, thresholds).map_err(|err| CliError::Compute(err.to_string()))?;
        for (t, v) in thresholds.iter().zip(values) {
            rows.push(vec![method.to_string(), t.to_string(), v.to_string(), e.len().to_string()]);
        }
    }
    Ok(rows)
}

fn pose_auc_report(ds: &Dataset, l: &Loaded, cfg: &ExperimentConfig) -> Result<Report> {
    let rc = ransac(cfg, cfg.evaluation.pose_ransac_threshold);
    let errors: Vec<Vec<f64>> = l
        .pairs
        .par_iter()
        .map(|(p, pm)| {
            let g = geometry_of(ds, p)?;
            let gt = g.a.pose()?.relative_to(&g.b.pose()?);
            Ok(methods(&l.run)
                .iter()
                .map(|m| {
                    estimate_pose_from_matches(matches_of(pm, m), &g.a.intrinsics, &g.b.intrinsics, &rc)
                        .and_then(|est| pose_error(&est, &gt))
                        .map_or(f64::INFINITY, |e| e.combined_deg)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let thresholds = &cfg.evaluation.pose_auc_thresholds_deg;
    Ok(Report {
        comments: vec![
            "metric: pose-auc".into(),
            "auc: area under the accuracy curve of max(rotation, translation direction) error in degrees; failed estimates count as infinite error".into(),
            "columns: method, threshold in degrees, auc, number of pairs".into(),
        ],
        header: vec!["method", "threshold_deg", "auc", "pairs"],
        rows: auc_rows(l, &errors, thresholds)?,
    })
}

fn homography_auc_report(ds: &Dataset, l: &Loaded, cfg: &ExperimentConfig) -> Result<Report> {
    let plane = ds.manifest.plane.as_ref().ok_or_else(|| {
        CliError::Config("homography-auc needs a dataset synthesized with synth.layout = \"plane\"".into())
    })?;
    let normal = Vector3::from(plane.normal);
    let rc = ransac(cfg, cfg.evaluation.homography_ransac_threshold);
    let thresholds = &cfg.evaluation.homography_auc_thresholds_px;
    let errors: Vec<Vec<f64>> = l
        .pairs
        .par_iter()
        .map(|(p, pm)| {
            let g = geometry_of(ds, p)?;
            let h_gt = plane_homography(
                &g.a.pose()?,
                &g.b.pose()?,
                &g.a.intrinsics,
                &g.b.intrinsics,
                &normal,
                plane.offset,
            )
            .map_err(|e| CliError::Compute(format!("{}: {e}", p.pair_id)))?;
            let corners = image_corners(g.a.width as f64, g.a.height as f64);
            Ok(methods(&l.run)
                .iter()
                .map(|m| {
                    homography_auc(matches_of(pm, m), &h_gt, &corners, thresholds, &rc)
                        .map_or(f64::INFINITY, |(err, _)| err)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(Report {
        comments: vec![
            "metric: homography-auc".into(),
            "auc: area under the accuracy curve of the mean image-corner reprojection error in pixels; failed estimates count as infinite error".into(),
            "columns: method, threshold in pixels, auc, number of pairs".into(),
        ],
        header: vec!["method", "threshold_px", "auc", "pairs"],
        rows: auc_rows(l, &errors, thresholds)?,
    })
}

fn tracks_report(ds: &Dataset, l: &Loaded, cfg: &ExperimentConfig) -> Result<Report> {
    let q = cfg
        .evaluation
        .quantize_px
        .unwrap_or(ds.manifest.synth.render.coarse_cell_px as f64);
    let mut view_ids: Vec<&str> = l
        .pairs
        .iter()
        .flat_map(|(p, _)| [p.view_a.as_str(), p.view_b.as_str()])
        .collect();
    view_ids.sort_unstable();
    view_ids.dedup();
    let index = |v: &str| view_ids.binary_search(&v).expect("view listed");

    let mut rows = Vec::new();
    for method in methods(&l.run) {
        let pairwise: Vec<((usize, usize), Vec<PointMatch>)> = l
            .pairs
            .iter()
            .map(|(p, pm)| ((index(&p.view_a), index(&p.view_b)), matches_of(pm, method).to_vec()))
            .collect();
        let stats = track_stats(&build_tracks(&pairwise, q));
        rows.push(vec![method.into(), "mean".into(), String::new(), stats.mean_length.to_string()]);
        rows.push(vec![method.into(), "count".into(), String::new(), stats.count.to_string()]);
        for (len, n) in &stats.histogram {
            rows.push(vec![method.into(), "histogram".into(), len.to_string(), n.to_string()]);
        }
    }
    Ok(Report {
        comments: vec![
            "metric: tracks".into(),
            format!("tracks: keypoints quantized to {q} px bins, merged across pairs by union-find; length = distinct views"),
            "columns: method, kind (mean | count | histogram), track length (histogram rows), value".into(),
        ],
        header: vec!["method", "kind", "track_length", "value"],
        rows,
    })
}

pub fn run(dataset: &Path, match_dir: &Path, metric: Metric, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let ds = Dataset::open(dataset)?;
    let loaded = load(&ds, match_dir)?;
    let report = match metric {
        Metric::Precision => precision_report(&ds, &loaded, &cfg)?,
        Metric::PoseAuc => pose_auc_report(&ds, &loaded, &cfg)?,
        Metric::HomographyAuc => homography_auc_report(&ds, &loaded, &cfg)?,
        Metric::Tracks => tracks_report(&ds, &loaded, &cfg)?,
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_file(out, &report.render())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_bits_preserves_order() {
        let v = [-3.5, -0.0, 0.0, 1e-9, 5.0, 40.0];
        for w in v.windows(2) {
            assert!(ordered_bits(w[0]) <= ordered_bits(w[1]));
        }
    }
}
