//! `match`: runs every enabled matching pipeline on every dataset pair.

use std::path::Path;

use geomatch_core::dense::{dual_softmax, mnn_select, similarity, CoarseMatchSet};
use geomatch_core::geometry::PointMatch;
use geomatch_core::optimizer::{optimize, AnchorMatchSet, InitSource, OptimizationTrace};
use geomatch_core::refine::refine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method, MethodToggles};
use crate::dataset::{Dataset, LoadedView, PairRecord};
use crate::error::{create_dir, write_file, CliError, Result};

pub const MATCH_HEADER: [&str; 7] = ["pair_id", "ax", "ay", "bx", "by", "confidence", "method"];
pub const RUN_FILE: &str = "run.json";

/// Summary written next to the match files so evaluation knows which pairs
/// and methods were attempted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub methods: Vec<String>,
    pub pairs: Vec<String>,
    pub failed_pairs: Vec<String>,
}

#[derive(Serialize)]
struct TraceFile<'a> {
    pair_id: &'a str,
    method: &'a str,
    init_source: InitSource,
    fundamental: [[f64; 3]; 3],
    trace: &'a OptimizationTrace,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Failure {
    pub pair_id: String,
    pub method: String,
    pub category: String,
    pub message: String,
}

struct PairOutcome {
    rows: Vec<(Method, Vec<PointMatch>)>,
    failures: Vec<Failure>,
    loaded: bool,
}

fn refine_matches(
    coarse: &CoarseMatchSet,
    a: &LoadedView,
    b: &LoadedView,
    cfg: &ExperimentConfig,
) -> Result<Vec<PointMatch>> {
    let r = refine(coarse, (&a.coarse, &b.coarse), (&a.fine, &b.fine), &cfg.refinement)
        .map_err(|e| CliError::Compute(e.to_string()))?;
    Ok(r.to_point_matches())
}

fn baseline(a: &LoadedView, b: &LoadedView, cfg: &ExperimentConfig) -> Result<Vec<PointMatch>> {
    let compute = |e: geomatch_core::dense::MatchingError| CliError::Compute(e.to_string());
    let s = similarity(&a.coarse, &b.coarse).map_err(compute)?;
    let p = dual_softmax(&s, cfg.optimizer.temperature).map_err(compute)?;
    drop(s);
    refine_matches(&mnn_select(&p, cfg.optimizer.theta_final), a, b, cfg)
}

fn geometric(
    pair: &PairRecord,
    method: Method,
    a: &LoadedView,
    b: &LoadedView,
    anchors: &AnchorMatchSet,
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<Vec<PointMatch>> {
    let res = optimize((&a.coarse, &b.coarse), anchors, &cfg.optimizer)
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let trace = TraceFile {
        pair_id: &pair.pair_id,
        method: method.name(),
        init_source: res.init_source,
        fundamental: res.fundamental.to_rows(),
        trace: &res.trace,
    };
    let json = serde_json::to_string_pretty(&trace).expect("trace serializes");
    write_file(
        &out.join(format!("traces/{}.{}.json", pair.pair_id, method.name())),
        json.as_bytes(),
    )?;
    refine_matches(&res.matches, a, b, cfg)
}

/// Category and message of an error, in a form that can be cloned.
type Described = (&'static str, String);

fn describe(e: CliError) -> Described {
    (e.category(), e.to_string())
}

fn run_pair(ds: &Dataset, pair: &PairRecord, methods: &[Method], cfg: &ExperimentConfig, out: &Path) -> PairOutcome {
    let fail = |method: &str, (category, message): Described| Failure {
        pair_id: pair.pair_id.clone(),
        method: method.to_string(),
        category: category.to_string(),
        message,
    };
    let views = ds
        .load_view(&pair.view_a)
        .and_then(|a| Ok((a, ds.load_view(&pair.view_b)?)));
    let (a, b) = match views {
        Ok(v) => v,
        Err(e) => {
            return PairOutcome {
                rows: Vec::new(),
                failures: vec![fail("*", describe(e))],
                loaded: false,
            }
        }
    };

    // Baseline matches are shared with the concatenation method.
    let base: Option<std::result::Result<Vec<PointMatch>, Described>> = methods
        .iter()
        .any(|m| matches!(m, Method::Baseline | Method::AnchorsConcat))
        .then(|| baseline(&a, &b, cfg).map_err(describe));

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &method in methods {
        let result = match method {
            Method::Baseline => base.clone().expect("computed when enabled"),
            Method::Geo => {
                geometric(pair, method, &a, &b, &AnchorMatchSet::empty(), cfg, out).map_err(describe)
            }
            Method::GeoAnchors => ds
                .read_points(&pair.anchors)
                .and_then(|m| geometric(pair, method, &a, &b, &AnchorMatchSet::new(m), cfg, out))
                .map_err(describe),
            Method::AnchorsConcat => base.clone().expect("computed when enabled").and_then(|mut m| {
                let anchors = ds.read_points(&pair.anchors).map_err(describe)?;
                m.extend(
                    anchors
                        .into_iter()
                        .filter(|x| x.confidence > cfg.optimizer.min_anchor_confidence),
                );
                Ok(m)
            }),
            Method::Gt => ds.read_points(&pair.gt).map_err(describe),
        };
        match result {
            Ok(m) => rows.push((method, m)),
            Err(e) => failures.push(fail(method.name(), e)),
        }
    }
    PairOutcome {
        rows,
        failures,
        loaded: true,
    }
}

fn match_csv(pair_id: &str, rows: &[(Method, Vec<PointMatch>)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MATCH_HEADER).expect("in-memory write");
    for (method, matches) in rows {
        for m in matches {
            let nums = [m.a.x, m.a.y, m.b.x, m.b.y, m.confidence].map(|v| v.to_string());
            w.write_record([pair_id, &nums[0], &nums[1], &nums[2], &nums[3], &nums[4], method.name()])
                .expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory write")
}

pub struct MatchSummary {
    pub succeeded: usize,
    pub failures: Vec<Failure>,
}

pub fn run(dataset: &Path, config: Option<&Path>, out: &Path, methods: Option<&str>) -> Result<MatchSummary> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(list) = methods {
        cfg.methods = MethodToggles::from_list(list)?;
    }
    cfg.validate()?;
    let ds = Dataset::open(dataset)?;
    let enabled = cfg.methods.enabled();
    create_dir(&out.join("matches"))?;
    create_dir(&out.join("traces"))?;

    let outcomes: Vec<PairOutcome> = ds
        .manifest
        .pairs
        .par_iter()
        .map(|pair| {
            let mut o = run_pair(&ds, pair, &enabled, &cfg, out);
            if o.loaded {
                let path = out.join(format!("matches/{}.csv", pair.pair_id));
                if let Err(e) = write_file(&path, &match_csv(&pair.pair_id, &o.rows)) {
                    o.failures.push(Failure {
                        pair_id: pair.pair_id.clone(),
                        method: "*".into(),
                        category: e.category().into(),
                        message: e.to_string(),
                    });
                    o.loaded = false;
                }
            }
            o
        })
        .collect();

    let mut failures: Vec<Failure> = Vec::new();
    let mut ok_pairs = Vec::new();
    let mut failed_pairs = Vec::new();
    for (pair, o) in ds.manifest.pairs.iter().zip(outcomes) {
        if o.loaded {
            ok_pairs.push(pair.pair_id.clone());
        } else {
            failed_pairs.push(pair.pair_id.clone());
        }
        failures.extend(o.failures);
    }
    failures.sort();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pair_id", "method", "category", "message"]).expect("in-memory write");
    for f in &failures {
        w.write_record([&f.pair_id, &f.method, &f.category, &f.message]).expect("in-memory write");
    }
    write_file(&out.join("failures.csv"), &w.into_inner().expect("in-memory write"))?;

    let run = RunRecord {
        methods: enabled.iter().map(|m| m.name().to_string()).collect(),
        pairs: ok_pairs,
        failed_pairs,
    };
    let json = serde_json::to_string_pretty(&run).expect("run record serializes");
    write_file(&out.join(RUN_FILE), json.as_bytes())?;

    if run.pairs.is_empty() {
        return Err(CliError::Compute(format!(
            "all {} pairs failed, see failures.csv",
            run.failed_pairs.len()
        )));
    }
    Ok(MatchSummary {
        succeeded: run.pairs.len(),
        failures,
    })
}
