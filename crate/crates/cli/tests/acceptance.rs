//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use geomatch_cli::commands::report::{read_report_csv, PrecisionRow, ReportInput};
use geomatch_cli::dataset::Manifest;
use geomatch_core::dense::{dual_softmax, mnn_select, similarity};
use geomatch_core::eval::{
    auc, build_tracks, estimate_pose_from_matches, homography_auc, image_corners, pose_error, track_stats,
    TrackGraph,
};
use geomatch_core::geometry::{
    fundamental_from_poses, normalized_eight_point, plane_homography, recover_pose, sampson_distance,
    symmetric_epipolar_error, CameraIntrinsics, CameraPose, FundamentalMatrix, HomogeneousPoint2,
    PointMatch, RansacConfig,
};
use geomatch_core::optimizer::{geometric_confidence, geometric_weight, optimize, AnchorMatchSet, OptimizerConfig};
use geomatch_core::refine::{refine, RefinementConfig};
use geomatch_core::synth::{
    build_planar_scene, build_scene, derive_seed, gt_point_matches, render_view, synthesize_anchors,
    AnchorSettings, RenderSettings, RenderedView, ViewpointParams,
};
use nalgebra::{Matrix3, Rotation3, Vector3};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, budget_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < budget_s, || {
        format!("took {:.2} s, budget {budget_s} s", elapsed.as_secs_f64())
    })
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_geomatch")
}

fn geomatch(args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`geomatch {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn desk() -> RenderSettings {
    RenderSettings {
        long_side: 416,
        coarse_cell_px: 8,
        fine_cell_px: 2,
    }
}

// 1 -------------------------------------------------------------------------

/// Textbook Sampson distance written out component by component.
/// Exact rational evaluation of the Sampson formula, rounded once.
fn sampson_oracle(f: &[[f64; 3]; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let q = |v: f64| BigRational::from_float(v).expect("finite input");
    let zero = || BigRational::from_integer(0.into());
    let (fq, aq, bq) = (f.map(|row| row.map(q)), a.map(q), b.map(q));
    let mut fa: [BigRational; 3] = std::array::from_fn(|_| zero());
    let mut ftb: [BigRational; 3] = std::array::from_fn(|_| zero());
    for i in 0..3 {
        for j in 0..3 {
            fa[i] += &fq[i][j] * &aq[j];
            ftb[j] += &fq[i][j] * &bq[i];
        }
    }
    let r = &bq[0] * &fa[0] + &bq[1] * &fa[1] + &bq[2] * &fa[2];
    let den = &fa[0] * &fa[0] + &fa[1] * &fa[1] + &ftb[0] * &ftb[0] + &ftb[1] * &ftb[1];
    (&r * &r / den).to_f64().expect("representable")
}

fn c1_sampson() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
        let f = FundamentalMatrix::raw(Matrix3::from_fn(|i, j| rows[i][j]));
        let a = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 1.0];
        let b = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 1.0];
        let got = sampson_distance(&f, &HomogeneousPoint2::new(a[0], a[1]), &HomogeneousPoint2::new(b[0], b[1]))
            .map_err(|e| e.to_string())?;
        let want = sampson_oracle(&rows, a, b);
        worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
    }
    ensure(worst <= 1e-12, || format!("max relative deviation {worst:e}"))?;
    let f = FundamentalMatrix::raw(Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0));
    let hand = sampson_distance(&f, &HomogeneousPoint2::new(0.0, 0.5), &HomogeneousPoint2::new(0.0, 0.0))
        .map_err(|e| e.to_string())?;
    ensure(hand == 0.125, || format!("worked example gave {hand}"))?;
    within_budget(t.elapsed(), 1.0)?;
    Ok(format!("max rel dev {worst:.1e} over 1000 draws, worked example {hand}"))
}

// 2 -------------------------------------------------------------------------

fn random_pose(rng: &mut ChaCha8Rng) -> CameraPose {
    let r = Rotation3::from_euler_angles(
        rng.gen_range(-0.4..0.4),
        rng.gen_range(-0.4..0.4),
        rng.gen_range(-0.4..0.4),
    )
    .into_inner();
    let t = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5));
    CameraPose::new(r, t).unwrap()
}

fn project_cloud(rng: &mut ChaCha8Rng, rel: &CameraPose, k: &CameraIntrinsics, n: usize) -> Vec<PointMatch> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(4.0..9.0));
        if let (Some(a), Some(b)) = (k.project(&x), k.project(&rel.transform(&x))) {
            out.push(PointMatch::new(a, b, 1.0));
        }
    }
    out
}

fn c2_solvers() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let k = CameraIntrinsics::identity();
    let (mut worst_sym, mut worst_rot, mut worst_tr): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..100 {
        let rel = random_pose(&mut rng);
        let matches = project_cloud(&mut rng, &rel, &k, 50);
        let f = normalized_eight_point(&matches).map_err(|e| e.to_string())?;
        for m in &matches {
            worst_sym = worst_sym.max(symmetric_epipolar_error(&f, &m.a, &m.b).map_err(|e| e.to_string())?);
        }
        let f_gt = fundamental_from_poses(&CameraPose::identity(), &rel, &k, &k).map_err(|e| e.to_string())?;
        let est = recover_pose(&f_gt, &k, &k, &matches).map_err(|e| e.to_string())?;
        let e = pose_error(&est, &rel).map_err(|e| e.to_string())?;
        worst_rot = worst_rot.max(e.rotation_deg);
        worst_tr = worst_tr.max(e.translation_deg);
    }
    ensure(worst_sym < 1e-10, || format!("max symmetric epipolar error {worst_sym:e}"))?;
    ensure(worst_rot < 1e-6 && worst_tr < 1e-6, || {
        format!("pose recovery error rotation {worst_rot:e}°, translation {worst_tr:e}°")
    })?;
    within_budget(t.elapsed(), 5.0)?;
    Ok(format!(
        "100 poses: max sym err {worst_sym:.1e}, rotation {worst_rot:.1e}°, translation {worst_tr:.1e}°"
    ))
}

// 3 -------------------------------------------------------------------------

fn c3_boundary() -> Outcome {
    let cfg = OptimizerConfig::default();
    ensure(cfg.tau == 10.0, || format!("default tau is {}", cfg.tau))?;
    let at_tau = geometric_weight(cfg.tau, cfg.tau);
    ensure((at_tau - 0.5).abs() <= 1e-12, || format!("P_d(tau) = {at_tau}"))?;
    let at_zero = geometric_weight(0.0, cfg.tau);
    let want = 1.0 / (1.0 + (-10.0f64).exp());
    ensure((at_zero - want).abs() <= 1e-12, || format!("P_d(0) = {at_zero}, want {want}"))?;

    let scene = build_scene(1500, 0.3, 64, 3).map_err(|e| e.to_string())?;
    let a = render_view(&scene, &ViewpointParams::new(10.0, 0.0, 0.0), &desk(), 0.05, 1).map_err(|e| e.to_string())?;
    let b = render_view(&scene, &ViewpointParams::new(10.0, 0.0, 20.0), &desk(), 0.05, 2).map_err(|e| e.to_string())?;
    let f = fundamental_from_poses(&a.pose, &b.pose, &a.intrinsics, &b.intrinsics).map_err(|e| e.to_string())?;
    let map = geometric_confidence(&f, (&a.coarse, &b.coarse), &cfg);
    let (lo, hi) = map.min_max();
    let sig = 1.0 / (1.0 + (-cfg.tau).exp());
    ensure(lo >= 0.5 && hi <= sig, || format!("dense map range [{lo}, {hi}], allowed [0.5, {sig}]"))?;
    Ok(format!(
        "P_d(tau)={at_tau}, P_d(0)={at_zero:.15}, {}x{} map in [{lo:.6}, {hi:.6}]",
        map.rows(),
        map.cols()
    ))
}

// 4 -------------------------------------------------------------------------

fn c4_baseline_identity() -> Outcome {
    let t = Instant::now();
    let cfg = OptimizerConfig {
        iterations: 0,
        ..OptimizerConfig::default()
    };
    let settings = RenderSettings {
        long_side: 224,
        coarse_cell_px: 8,
        fine_cell_px: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut total = 0;
    for seed in 0..20u64 {
        let scene = build_scene(600, 0.3, 32, seed).map_err(|e| e.to_string())?;
        let vb = ViewpointParams::new(rng.gen_range(9.0..14.0), rng.gen_range(-20.0..20.0), rng.gen_range(-30.0..30.0));
        let a = render_view(&scene, &ViewpointParams::new(10.0, 0.0, 0.0), &settings, 0.05, 1).map_err(|e| e.to_string())?;
        let b = render_view(&scene, &vb, &settings, 0.05, 2).map_err(|e| e.to_string())?;
        let anchors = synthesize_anchors(&a, &b, &AnchorSettings::default(), seed).map_err(|e| e.to_string())?;
        let res = optimize((&a.coarse, &b.coarse), &AnchorMatchSet::new(anchors), &cfg).map_err(|e| e.to_string())?;
        let s = similarity(&a.coarse, &b.coarse).map_err(|e| e.to_string())?;
        let base = mnn_select(&dual_softmax(&s, cfg.temperature).map_err(|e| e.to_string())?, cfg.theta_final);
        let mut x = res.matches.pairs();
        let mut y = base.pairs();
        x.sort_unstable();
        y.sort_unstable();
        ensure(x == y, || format!("seed {seed}: {} optimized vs {} baseline matches", x.len(), y.len()))?;
        total += x.len();
    }
    within_budget(t.elapsed(), 10.0)?;
    Ok(format!("20 pairs, {total} matches, identical sets"))
}

// 5, 6, 7 -------------------------------------------------------------------

struct SweepRun {
    variable: &'static str,
    rows: Vec<PrecisionRow>,
    match_dir: PathBuf,
    elapsed: Duration,
}

fn sweep_config(variable: &str) -> String {
    format!(
        r#"{{"schema_version": 1,
  "synth": {{"ambiguity_fraction": 0.3, "noise_sigma": 0.05,
    "sweep": {{"variable": "{variable}", "start": 5, "end": 40, "step": 5, "pairs_per_step": 5,
      "base": {{"distance": 10, "alpha": 0, "beta": 0}}}}}}}}"#
    )
}

fn run_sweep(root: &Path, variable: &'static str) -> Result<SweepRun, String> {
    let t = Instant::now();
    let cfg = root.join(format!("{variable}.json"));
    std::fs::write(&cfg, sweep_config(variable)).map_err(|e| e.to_string())?;
    let ds = root.join(format!("{variable}_ds"));
    let m = root.join(format!("{variable}_matches"));
    let csv = root.join(format!("{variable}_precision.csv"));
    geomatch(&["synth", "--config", p(&cfg), "--out", p(&ds)])?;
    geomatch(&[
        "match", "--dataset", p(&ds), "--config", p(&cfg), "--out", p(&m), "--methods", "baseline,geo,geo+anchors",
    ])?;
    geomatch(&[
        "eval", "--dataset", p(&ds), "--matches", p(&m), "--metric", "precision", "--config", p(&cfg), "--out", p(&csv),
    ])?;
    let mut input = ReportInput::default();
    read_report_csv(&csv, &mut input).map_err(|e| e.to_string())?;
    Ok(SweepRun {
        variable,
        rows: input.precision,
        match_dir: m,
        elapsed: t.elapsed(),
    })
}

fn series(rows: &[PrecisionRow], method: &str) -> BTreeMap<u64, f64> {
    rows.iter()
        .filter(|r| r.method == method)
        .map(|r| ((r.offset * 1000.0).round() as u64, r.precision))
        .collect()
}

/// `method` ≥ baseline at every offset and strictly greater on average.
fn dominates(run: &SweepRun, method: &str) -> Result<String, String> {
    let base = series(&run.rows, "baseline");
    let ours = series(&run.rows, method);
    ensure(base.len() == 8 && ours.len() == 8, || {
        format!("{}: expected 8 offsets, got {} and {}", run.variable, base.len(), ours.len())
    })?;
    for (off, b) in &base {
        let o = ours[off];
        ensure(o >= *b, || format!("{} offset {}: {method} {o:.4} < baseline {b:.4}", run.variable, *off as f64 / 1000.0))?;
    }
    let mb = base.values().sum::<f64>() / 8.0;
    let mo = ours.values().sum::<f64>() / 8.0;
    ensure(mo > mb, || format!("{}: mean {method} {mo:.4} not above baseline {mb:.4}", run.variable))?;
    Ok(format!("{} {mo:.3} vs {mb:.3}", run.variable))
}

fn c5_correction(runs: &[SweepRun]) -> Outcome {
    let mut parts = Vec::new();
    for r in runs {
        parts.push(dominates(r, "geo+anchors")?);
        within_budget(r.elapsed, 300.0).map_err(|e| format!("{} sweep {e}", r.variable))?;
    }
    let times: Vec<String> = runs.iter().map(|r| format!("{:.0}s", r.elapsed.as_secs_f64())).collect();
    Ok(format!("mean precision {}; sweep times {}", parts.join(", "), times.join("/")))
}

fn c6_degradation(runs: &[SweepRun], root: &Path) -> Outcome {
    let beta = runs.iter().find(|r| r.variable == "beta").ok_or("no beta sweep")?;
    let base = series(&beta.rows, "baseline");
    let (first, last) = (base[&5000], base[&40000]);
    ensure(last < first, || format!("baseline at 40 ({last:.4}) not below 5 ({first:.4})"))?;
    let out = root.join("report");
    geomatch(&["report", "--out", p(&out), p(&root.join("beta_precision.csv"))])?;
    let trend = std::fs::read_to_string(out.join("trend.csv")).map_err(|e| e.to_string())?;
    let row = trend
        .lines()
        .find(|l| l.starts_with("baseline,beta,"))
        .ok_or("trend.csv has no baseline beta row")?;
    ensure(row.ends_with(",true"), || format!("trend row `{row}` not marked decreasing"))?;
    Ok(format!("baseline beta {first:.3} at 5 -> {last:.3} at 40; trend.csv row marked decreasing"))
}

fn c7_no_anchor(runs: &[SweepRun]) -> Outcome {
    let mut parts = Vec::new();
    for r in runs {
        let failures = std::fs::read_to_string(r.match_dir.join("failures.csv")).map_err(|e| e.to_string())?;
        let geo_failures = failures.lines().skip(1).filter(|l| l.split(',').nth(1).is_some_and(|m| m == "geo" || m == "*")).count();
        ensure(geo_failures == 0, || format!("{}: {geo_failures} geo failures", r.variable))?;
        parts.push(dominates(r, "geo")?);
    }
    Ok(format!("all pairs completed; mean precision {}", parts.join(", ")))
}

// 8 -------------------------------------------------------------------------

/// Midpoint-rule integral of the empirical CDF on `[0, t]`.
fn auc_oracle(errors: &[f64], t: f64, step: f64) -> f64 {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = (t / step).round() as usize;
    let mut k = 0;
    let mut area = 0.0;
    for i in 0..n {
        let x = (i as f64 + 0.5) * step;
        while k < sorted.len() && sorted[k] <= x {
            k += 1;
        }
        area += k as f64;
    }
    area * step / (sorted.len() as f64 * t)
}

fn full_method(a: &RenderedView, b: &RenderedView, seed: u64) -> Result<Vec<PointMatch>, String> {
    let anchors = synthesize_anchors(a, b, &AnchorSettings::default(), seed).map_err(|e| e.to_string())?;
    let res = optimize((&a.coarse, &b.coarse), &AnchorMatchSet::new(anchors), &OptimizerConfig::default())
        .map_err(|e| e.to_string())?;
    let refined = refine(&res.matches, (&a.coarse, &b.coarse), (&a.fine, &b.fine), &RefinementConfig::default())
        .map_err(|e| e.to_string())?;
    Ok(refined.to_point_matches())
}

fn c8_pose() -> Outcome {
    let scene = build_scene(1500, 0.0, 64, 8).map_err(|e| e.to_string())?;
    let a = render_view(&scene, &ViewpointParams::new(10.0, 0.0, 0.0), &desk(), 0.0, 1).map_err(|e| e.to_string())?;
    let b = render_view(&scene, &ViewpointParams::new(10.0, 0.0, 20.0), &desk(), 0.0, 2).map_err(|e| e.to_string())?;
    let matches = full_method(&a, &b, 8)?;
    let est = estimate_pose_from_matches(&matches, &a.intrinsics, &b.intrinsics, &RansacConfig::new(1.0, 2000, 0))
        .map_err(|e| e.to_string())?;
    let e = pose_error(&est, &a.pose.relative_to(&b.pose)).map_err(|e| e.to_string())?;
    ensure(e.combined_deg < 0.5, || format!("combined pose error {:.4}°", e.combined_deg))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let thresholds = [5.0, 10.0, 20.0];
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.gen_range(1..40);
        let errors: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..25.0)).collect();
        let got = auc(&errors, &thresholds).map_err(|e| e.to_string())?;
        for (t, g) in thresholds.iter().zip(got) {
            worst = worst.max((g - auc_oracle(&errors, *t, 1e-6)).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("AUC deviates from the integration oracle by {worst:e}"))?;
    Ok(format!(
        "{} matches, pose error {:.4}° (rot {:.4}°, trans {:.4}°); AUC oracle dev {worst:.1e}",
        matches.len(),
        e.combined_deg,
        e.rotation_deg,
        e.translation_deg
    ))
}

// 9 -------------------------------------------------------------------------

fn c9_homography(root: &Path) -> Outcome {
    let scene = build_planar_scene(1500, 0.0, 64, 9).map_err(|e| e.to_string())?;
    let a = render_view(&scene, &ViewpointParams::new(10.0, 0.0, 0.0), &desk(), 0.0, 1).map_err(|e| e.to_string())?;
    let b = render_view(&scene, &ViewpointParams::new(10.0, 10.0, 25.0), &desk(), 0.0, 2).map_err(|e| e.to_string())?;
    let plane = scene.planar_patch.ok_or("planar scene without plane")?;
    let h_gt = plane_homography(&a.pose, &b.pose, &a.intrinsics, &b.intrinsics, &plane.normal, plane.offset)
        .map_err(|e| e.to_string())?;
    let corners = image_corners(a.width as f64, a.height as f64);
    let (err, aucs) = homography_auc(
        &gt_point_matches(&a, &b),
        &h_gt,
        &corners,
        &[3.0, 5.0, 10.0],
        &RansacConfig::new(3.0, 2000, 0),
    )
    .map_err(|e| e.to_string())?;
    ensure(err < 1e-6, || format!("corner error {err:e} px"))?;
    ensure((aucs[0] - 1.0).abs() < 1e-6, || format!("AUC@3px {}", aucs[0]))?;

    // Same check through the command-line path.
    let cfg = root.join("plane.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1,
  "synth": {"layout": "plane", "ambiguity_fraction": 0, "noise_sigma": 0, "render": {"long_side": 224},
    "sweep": {"variable": "beta", "start": 10, "end": 20, "step": 10, "pairs_per_step": 2,
      "base": {"distance": 10, "alpha": 0, "beta": 0}}}}"#,
    )
    .map_err(|e| e.to_string())?;
    let ds = root.join("plane_ds");
    let m = root.join("plane_matches");
    let out = root.join("plane_auc.csv");
    geomatch(&["synth", "--config", p(&cfg), "--out", p(&ds)])?;
    geomatch(&["match", "--dataset", p(&ds), "--config", p(&cfg), "--out", p(&m), "--methods", "gt"])?;
    geomatch(&["eval", "--dataset", p(&ds), "--matches", p(&m), "--metric", "homography-auc", "--config", p(&cfg), "--out", p(&out)])?;
    let text = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
    let row = text.lines().find(|l| l.starts_with("gt,3,")).ok_or("no gt@3 row")?;
    let v: f64 = row.split(',').nth(2).and_then(|s| s.parse().ok()).ok_or("bad auc cell")?;
    ensure((v - 1.0).abs() < 1e-6, || format!("CLI AUC@3px {v}"))?;
    Ok(format!("corner error {err:.1e} px, AUC@3/5/10 = {:.9}/{:.9}/{:.9}; CLI AUC@3 {v:.9}", aucs[0], aucs[1], aucs[2]))
}

// 10 ------------------------------------------------------------------------

fn same_partition_under_shuffles(pairwise: &[((usize, usize), Vec<PointMatch>)], q: f64, reference: &TrackGraph) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for k in 0..100 {
        let mut shuffled = pairwise.to_vec();
        shuffled.shuffle(&mut rng);
        for (_, m) in shuffled.iter_mut() {
            m.shuffle(&mut rng);
        }
        ensure(&build_tracks(&shuffled, q) == reference, || format!("shuffle {k} changed the partition"))?;
    }
    Ok(())
}

fn c10_tracks() -> Outcome {
    let scene = build_scene(1500, 0.3, 64, 10).map_err(|e| e.to_string())?;
    let views: Vec<RenderedView> = [0.0, 5.0, 10.0, 15.0, 20.0]
        .iter()
        .enumerate()
        .map(|(k, beta)| {
            render_view(&scene, &ViewpointParams::new(10.0, 0.0, *beta), &desk(), 0.05, derive_seed(10, k as u64))
                .map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let q = desk().coarse_cell_px as f64;
    let mut anchored = Vec::new();
    for i in 0..views.len() - 1 {
        anchored.push(((i, i + 1), full_method(&views[i], &views[i + 1], i as u64)?));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let jittered: Vec<((usize, usize), Vec<PointMatch>)> = anchored
        .iter()
        .map(|(key, m)| {
            let moved = m
                .iter()
                .map(|x| {
                    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    PointMatch::new(
                        x.a,
                        HomogeneousPoint2::new(x.b.x + 1.5 * q * phi.cos(), x.b.y + 1.5 * q * phi.sin()),
                        x.confidence,
                    )
                })
                .collect();
            (*key, moved)
        })
        .collect();
    let g_anchored = build_tracks(&anchored, q);
    let g_jittered = build_tracks(&jittered, q);
    let (sa, sj) = (track_stats(&g_anchored), track_stats(&g_jittered));
    ensure(sa.mean_length > sj.mean_length, || {
        format!("anchored mean {:.3} not above jittered {:.3}", sa.mean_length, sj.mean_length)
    })?;
    same_partition_under_shuffles(&anchored, q, &g_anchored)?;
    same_partition_under_shuffles(&jittered, q, &g_jittered)?;
    Ok(format!(
        "mean track length {:.3} ({} tracks) vs jittered {:.3} ({} tracks); 100 shuffles identical",
        sa.mean_length, sa.count, sj.mean_length, sj.count
    ))
}

// 11 ------------------------------------------------------------------------

fn c11_protocol(root: &Path) -> Outcome {
    let mut parts = Vec::new();
    for variable in ["distance", "alpha", "beta"] {
        let cfg = root.join(format!("tiny_{variable}.json"));
        std::fs::write(
            &cfg,
            format!(
                r#"{{"schema_version": 1,
  "synth": {{"n_points": 200, "descriptor_dim": 8, "render": {{"long_side": 64}},
    "sweep": {{"variable": "{variable}", "start": 5, "end": 40, "step": 5, "pairs_per_step": 5,
      "base": {{"distance": 10, "alpha": 0, "beta": 0}}}}}}}}"#
            ),
        )
        .map_err(|e| e.to_string())?;
        let ds = root.join(format!("full_{variable}"));
        geomatch(&["synth", "--config", p(&cfg), "--out", p(&ds), "--paper-scale"])?;
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(ds.join("manifest.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        ensure(m.pairs.len() == 900, || format!("{variable}: {} pairs", m.pairs.len()))?;
        let mut per_offset: BTreeMap<i64, usize> = BTreeMap::new();
        for pr in &m.pairs {
            ensure(pr.offset.fract() == 0.0, || format!("non-integer offset {}", pr.offset))?;
            *per_offset.entry(pr.offset as i64).or_default() += 1;
            ensure(pr.params_a == ViewpointParams::new(10.0, 0.0, 0.0), || format!("base {:?}", pr.params_a))?;
            let mut want = pr.params_a;
            match variable {
                "distance" => want.distance += pr.offset,
                "alpha" => want.alpha += pr.offset,
                _ => want.beta += pr.offset,
            }
            ensure(pr.params_b == want, || format!("{}: view B {:?}", pr.pair_id, pr.params_b))?;
        }
        let offsets: Vec<i64> = per_offset.keys().copied().collect();
        ensure(offsets == (5..=40).collect::<Vec<_>>(), || format!("{variable}: offsets {offsets:?}"))?;
        ensure(per_offset.values().all(|&n| n == 25), || format!("{variable}: uneven offsets"))?;
        parts.push(format!("{variable} 900"));
    }
    Ok(format!("{}; offsets 5..=40 step 1, 25 each, base (10, 0, 0)", parts.join(", ")))
}

// 12 ------------------------------------------------------------------------

fn collect_files(dir: &Path, base: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, base, out)?;
        } else {
            out.insert(path.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&path)?);
        }
    }
    Ok(())
}

fn full_pipeline(root: &Path, cfg: &Path, threads: &str) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin())
            .args(args)
            .env("GEOMATCH_THREADS", threads)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())
    };
    let (ds, m, e, r) = (root.join("ds"), root.join("matches"), root.join("eval"), root.join("report"));
    run(&["synth", "--config", p(cfg), "--out", p(&ds), "--seed", "7"])?;
    run(&["match", "--dataset", p(&ds), "--config", p(cfg), "--out", p(&m)])?;
    let mut csvs = Vec::new();
    for metric in ["precision", "pose-auc", "tracks"] {
        let out = e.join(format!("{metric}.csv"));
        run(&["eval", "--dataset", p(&ds), "--matches", p(&m), "--metric", metric, "--config", p(cfg), "--out", p(&out)])?;
        csvs.push(out);
    }
    let mut args = vec!["report", "--out", p(&r)];
    args.extend(csvs.iter().map(|c| p(c)));
    run(&args)?;
    let mut files = BTreeMap::new();
    collect_files(root, root, &mut files).map_err(|e| e.to_string())?;
    Ok(files)
}

fn c12_determinism(root: &Path) -> Outcome {
    let cfg = root.join("det.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1,
  "synth": {"n_points": 600, "render": {"long_side": 160},
    "sweep": {"variable": "beta", "start": 5, "end": 15, "step": 10, "pairs_per_step": 2,
      "base": {"distance": 10, "alpha": 0, "beta": 0}}}}"#,
    )
    .map_err(|e| e.to_string())?;
    let first = full_pipeline(&root.join("run1"), &cfg, "1")?;
    let second = full_pipeline(&root.join("run2"), &cfg, "3")?;
    let names: Vec<&PathBuf> = first.keys().collect();
    ensure(names == second.keys().collect::<Vec<_>>(), || "file sets differ".into())?;
    for (name, bytes) in &first {
        ensure(&second[name] == bytes, || format!("{} differs", name.display()))?;
    }
    for required in ["ds/manifest.json", "matches/failures.csv", "eval/precision.csv", "report/trend.csv", "report/summary.md"] {
        ensure(first.contains_key(Path::new(required)), || format!("{required} missing"))?;
    }
    let n_match = first.keys().filter(|k| k.starts_with("matches/matches")).count();
    Ok(format!("{} files byte-identical across reruns ({n_match} match files), 1 vs 3 worker threads", first.len()))
}

// ---------------------------------------------------------------------------

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut record = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        let elapsed = t.elapsed();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!("{tag} [{n:>2}] {name}: {detail} ({:.1} s)", elapsed.as_secs_f64());
        results.push((n, name, outcome, elapsed));
    };

    record(1, "sampson exactness", &mut c1_sampson);
    record(2, "solver exactness", &mut c2_solvers);
    record(3, "geometric confidence boundary", &mut c3_boundary);
    record(4, "baseline identity", &mut c4_baseline_identity);

    let sweeps: Result<Vec<SweepRun>, String> =
        ["distance", "alpha", "beta"].into_iter().map(|v| run_sweep(root, v)).collect();
    match &sweeps {
        Ok(runs) => {
            record(5, "correction property", &mut || c5_correction(runs));
            record(6, "degradation shape", &mut || c6_degradation(runs, root));
            record(7, "no-anchor operation", &mut || c7_no_anchor(runs));
        }
        Err(e) => {
            for (n, name) in [(5, "correction property"), (6, "degradation shape"), (7, "no-anchor operation")] {
                record(n, name, &mut || Err(format!("sweep failed: {e}")));
            }
        }
    }
    record(8, "pose pipeline", &mut c8_pose);
    record(9, "homography path", &mut || c9_homography(root));
    record(10, "track length", &mut c10_tracks);
    record(11, "protocol fidelity", &mut || c11_protocol(root));
    record(12, "determinism", &mut || c12_determinism(root));

    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
