//! `report`: SVG precision plots, a trend table and a markdown summary from
//! evaluation CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{create_dir, read_text, write_file, CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionRow {
    pub method: String,
    pub variable: String,
    pub offset: f64,
    pub precision: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucRow {
    pub metric: &'static str,
    pub method: String,
    pub threshold: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub method: String,
    pub kind: String,
    pub length: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Default)]
pub struct ReportInput {
    pub precision: Vec<PrecisionRow>,
    pub auc: Vec<AucRow>,
    pub tracks: Vec<TrackRow>,
}

fn num<T: std::str::FromStr>(path: &Path, line: u64, field: &str, column: &str) -> Result<T> {
    field.trim().parse::<T>().map_err(|_| {
        CliError::format(path, format!("line {line}: column `{column}` is not a number: `{field}`"))
    })
}

fn finite(path: &Path, line: u64, v: f64, column: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::format(path, format!("line {line}: column `{column}` is not finite")))
    }
}

pub fn read_report_csv(path: &Path, into: &mut ReportInput) -> Result<()> {
    let text = read_text(path)?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::format(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let kind = match header.as_slice() {
        ["method", "variable", "offset", "precision", "pairs"] => 0,
        ["method", "threshold_deg", "auc", "pairs"] => 1,
        ["method", "threshold_px", "auc", "pairs"] => 2,
        ["method", "kind", "track_length", "value"] => 3,
        _ => {
            return Err(CliError::format(
                path,
                format!("unrecognized header `{}`", header.join(",")),
            ))
        }
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::format(path, format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        match kind {
            0 => {
                let offset = finite(path, line, num(path, line, &rec[2], "offset")?, "offset")?;
                let precision = finite(path, line, num(path, line, &rec[3], "precision")?, "precision")?;
                into.precision.push(PrecisionRow {
                    method: rec[0].to_string(),
                    variable: rec[1].to_string(),
                    offset,
                    precision,
                    pairs: num(path, line, &rec[4], "pairs")?,
                });
            }
            1 | 2 => into.auc.push(AucRow {
                metric: if kind == 1 { "pose" } else { "homography" },
                method: rec[0].to_string(),
                threshold: finite(path, line, num(path, line, &rec[1], header[1])?, header[1])?,
                auc: finite(path, line, num(path, line, &rec[2], "auc")?, "auc")?,
            }),
            _ => into.tracks.push(TrackRow {
                method: rec[0].to_string(),
                kind: rec[1].to_string(),
                length: if rec[2].is_empty() {
                    None
                } else {
                    Some(num(path, line, &rec[2], "track_length")?)
                },
                value: finite(path, line, num(path, line, &rec[3], "value")?, "value")?,
            }),
        }
    }
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Methods in order of first appearance.
fn method_order<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for n in names {
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

/// Line plot of precision against offset with one polyline per method. The
/// legend uses plain `line` elements so the polyline count equals the
/// method count.
pub fn precision_svg(variable: &str, rows: &[&PrecisionRow]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (64.0, 160.0, 40.0, 56.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let xmin = rows.iter().map(|r| r.offset).fold(f64::INFINITY, f64::min);
    let xmax = rows.iter().map(|r| r.offset).fold(f64::NEG_INFINITY, f64::max);
    let span = if xmax > xmin { xmax - xmin } else { 1.0 };
    let sx = |x: f64| left + (x - xmin) / span * pw;
    let sy = |y: f64| top + (1.0 - y.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">Matching precision vs {variable} offset</text>"#,
        left + pw / 2.0
    );
    // Axes and ticks.
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.1}" stroke="black"/>"#, top + ph);
    for k in 0..=5 {
        let y = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y:.1}</text>"#,
            left - 6.0,
            sy(y) + 4.0
        );
    }
    let mut offsets: Vec<f64> = rows.iter().map(|r| r.offset).collect();
    offsets.sort_by(f64::total_cmp);
    offsets.dedup();
    for x in &offsets {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#,
            sx(*x),
            top + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{variable} offset</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">precision</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (k, method) in method_order(rows.iter().map(|r| r.method.as_str())).into_iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.offset, r.precision))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let points: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 12.0 + 20.0 * k as f64;
        let lx = left + pw + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{method}</text>"#, lx + 30.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// First and last offset per (method, variable), with the precision change.
pub fn trend_csv(rows: &[PrecisionRow]) -> Vec<u8> {
    let mut groups: BTreeMap<(&str, &str), Vec<&PrecisionRow>> = BTreeMap::new();
    let order = method_order(rows.iter().map(|r| r.method.as_str()));
    for r in rows {
        groups.entry((r.variable.as_str(), r.method.as_str())).or_default().push(r);
    }
    let mut out = String::from(
        "# trend: precision at the smallest and largest offset of each sweep\n# columns: method, variable, first offset, precision there, last offset, precision there, last minus first, whether precision drops\n",
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "variable",
        "first_offset",
        "first_precision",
        "last_offset",
        "last_precision",
        "change",
        "decreasing",
    ])
    .expect("in-memory write");
    let mut keys: Vec<(&str, &str)> = groups.keys().copied().collect();
    keys.sort_by_key(|(v, m)| (order.iter().position(|x| x == m), *v));
    for key in keys {
        let g = &groups[&key];
        let first = g.iter().min_by(|a, b| a.offset.total_cmp(&b.offset)).unwrap();
        let last = g.iter().max_by(|a, b| a.offset.total_cmp(&b.offset)).unwrap();
        let change = last.precision - first.precision;
        w.write_record([
            key.1.to_string(),
            key.0.to_string(),
            first.offset.to_string(),
            first.precision.to_string(),
            last.offset.to_string(),
            last.precision.to_string(),
            change.to_string(),
            (change < 0.0).to_string(),
        ])
        .expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf8"));
    out.into_bytes()
}

pub fn summary_markdown(input: &ReportInput) -> String {
    let mut s = String::from("# Experiment summary\n");
    let mut variables: Vec<&str> = input.precision.iter().map(|r| r.variable.as_str()).collect();
    variables.sort_unstable();
    variables.dedup();
    for v in variables {
        let rows: Vec<&PrecisionRow> = input.precision.iter().filter(|r| r.variable == v).collect();
        let _ = writeln!(s, "\n## Matching precision, {v} sweep\n");
        s.push_str("| method | mean precision | min | max | offsets |\n|---|---|---|---|---|\n");
        for m in method_order(rows.iter().map(|r| r.method.as_str())) {
            let p: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.precision).collect();
            let mean = p.iter().sum::<f64>() / p.len() as f64;
            let min = p.iter().copied().fold(f64::INFINITY, f64::min);
            let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(s, "| {m} | {mean:.4} | {min:.4} | {max:.4} | {} |", p.len());
        }
    }
    for (metric, unit) in [("pose", "°"), ("homography", " px")] {
        let rows: Vec<&AucRow> = input.auc.iter().filter(|r| r.metric == metric).collect();
        if rows.is_empty() {
            continue;
        }
        let mut thresholds: Vec<f64> = rows.iter().map(|r| r.threshold).collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        let _ = writeln!(s, "\n## {} AUC\n", if metric == "pose" { "Pose" } else { "Homography" });
        s.push_str("| method |");
        for t in &thresholds {
            let _ = write!(s, " @{t}{unit} |");
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(thresholds.len()));
        s.push('\n');
        for m in method_order(rows.iter().map(|r| r.method.as_str())) {
            let _ = write!(s, "| {m} |");
            for t in &thresholds {
                match rows.iter().find(|r| r.method == m && r.threshold == *t) {
                    Some(r) => {
                        let _ = write!(s, " {:.4} |", r.auc);
                    }
                    None => s.push_str(" - |"),
                }
            }
            s.push('\n');
        }
    }
    if !input.tracks.is_empty() {
        s.push_str("\n## Tracks\n\n| method | mean track length | tracks |\n|---|---|---|\n");
        for m in method_order(input.tracks.iter().map(|r| r.method.as_str())) {
            let get = |kind: &str| {
                input
                    .tracks
                    .iter()
                    .find(|r| r.method == m && r.kind == kind)
                    .map_or(0.0, |r| r.value)
            };
            let _ = writeln!(s, "| {m} | {:.4} | {} |", get("mean"), get("count"));
        }
    }
    s
}

/// Writes the report and returns the paths of the files it created.
pub fn run(out: &Path, inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(CliError::MissingInput("report needs at least one CSV".into()));
    }
    let mut input = ReportInput::default();
    for p in inputs {
        read_report_csv(p, &mut input)?;
    }
    create_dir(out)?;
    let mut written = Vec::new();
    let mut variables: Vec<&str> = input.precision.iter().map(|r| r.variable.as_str()).collect();
    variables.sort_unstable();
    variables.dedup();
    for v in variables {
        let rows: Vec<&PrecisionRow> = input.precision.iter().filter(|r| r.variable == v).collect();
        let path = out.join(format!("precision_{v}.svg"));
        write_file(&path, precision_svg(v, &rows).as_bytes())?;
        written.push(path);
    }
    if !input.precision.is_empty() {
        let path = out.join("trend.csv");
        write_file(&path, &trend_csv(&input.precision))?;
        written.push(path);
    }
    let path = out.join("summary.md");
    write_file(&path, summary_markdown(&input).as_bytes())?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<PrecisionRow> {
        let mut v = Vec::new();
        for (m, base) in [("baseline", 0.8), ("geo+anchors", 0.95)] {
            for (k, off) in [5.0, 10.0, 15.0].into_iter().enumerate() {
                v.push(PrecisionRow {
                    method: m.into(),
                    variable: "beta".into(),
                    offset: off,
                    precision: base - 0.05 * k as f64,
                    pairs: 5,
                });
            }
        }
        v
    }

    #[test]
    fn one_polyline_per_method() {
        let r = rows();
        let refs: Vec<&PrecisionRow> = r.iter().collect();
        let svg = precision_svg("beta", &refs);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg, precision_svg("beta", &refs));
    }

    #[test]
    fn trend_marks_drops() {
        let text = String::from_utf8(trend_csv(&rows())).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 3);
        assert!(data[1].starts_with("baseline,beta,5,0.8,15,"));
        assert!(data[1].ends_with(",true"));
    }

    #[test]
    fn malformed_cell_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let mut text = String::from("# a\n# b\nmethod,variable,offset,precision,pairs\n");
        text.push_str("baseline,beta,5,0.9,5\nbaseline,beta,10,0.8,5\nbaseline,beta,15,0.7,5\nbaseline,beta,20,oops,5\n");
        std::fs::write(&path, text).unwrap();
        let err = read_report_csv(&path, &mut ReportInput::default()).unwrap_err();
        assert!(err.to_string().contains("line 7"), "{err}");
    }
}
