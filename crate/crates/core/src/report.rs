//! Reporting: the threefold summary, failure summaries, rank divergence,
//! reproducibility stamps and SVG figures.
//!
//! Reports are built from raw tables only. Imputed tables are rejected so a
//! filled-in value can never be mistaken for an observed one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggregate::{
    aggregate_discard_all, aggregate_discard_single, failure_proportion, format_value, mean, parse_value,
    AggregateError, AggregateValue, Basis, FailureProportion,
};
use crate::study_ci::CiStudyReport;
use crate::study_or::OrStudyOutput;
use crate::table::{DatasetId, FailureKind, MethodId, ResultTable, TableError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("table contains imputed values; reports take raw tables only")]
    ImputedInput,
    #[error("annotation for `{method}` on dataset `{dataset}` does not reference a failure")]
    DanglingAnnotation { method: String, dataset: String },
    #[error("rankings cover different methods: {0}")]
    MethodMismatch(String),
    #[error("malformed report: {0}")]
    Malformed(String),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seed, configuration digest and harness version attached to every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReproStamp {
    pub seed: u64,
    pub config_digest: String,
    pub version: String,
}

impl ReproStamp {
    pub fn new(seed: u64, config: &str) -> Self {
        Self {
            seed,
            config_digest: sha256_hex(config.as_bytes()),
            version: crate::VERSION.to_string(),
        }
    }
}

pub const CONDITIONAL_CAVEAT: &str = "Aggregates that discard failed data sets are conditional on success; \
they do not assess unconditional performance, which is undefined for any method that fails.";

// ---------------------------------------------------------------------------
// Threefold report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreefoldReport {
    pub methods: Vec<MethodId>,
    pub discard_single: BTreeMap<MethodId, AggregateValue>,
    pub discard_all: BTreeMap<MethodId, AggregateValue>,
    pub failure_proportions: BTreeMap<MethodId, FailureProportion>,
    /// Set when the joint success set is empty.
    pub note: Option<String>,
    pub caveat: String,
    pub stamp: ReproStamp,
}

/// Discard-single and discard-all means plus failure proportions.
pub fn emit_threefold(table: &ResultTable, stamp: ReproStamp) -> Result<ThreefoldReport, ReportError> {
    emit_threefold_with(table, mean, stamp)
}

pub fn emit_threefold_with<S: Fn(&[f64]) -> f64>(
    table: &ResultTable,
    stat: S,
    stamp: ReproStamp,
) -> Result<ThreefoldReport, ReportError> {
    if table.is_imputed() {
        return Err(ReportError::ImputedInput);
    }
    let methods = table.methods().to_vec();
    let mut discard_single = BTreeMap::new();
    let mut failure_proportions = BTreeMap::new();
    for m in &methods {
        discard_single.insert(m.clone(), aggregate_discard_single(table, m, &stat)?);
        failure_proportions.insert(m.clone(), failure_proportion(table, m)?);
    }
    let discard_all = aggregate_discard_all(table, &methods, &stat)?;
    let note = discard_all
        .values()
        .all(|v| !v.defined())
        .then(|| "no data set is solved by every method; discard-all aggregates are undefined".to_string());
    Ok(ThreefoldReport {
        methods,
        discard_single,
        discard_all,
        failure_proportions,
        note,
        caveat: CONDITIONAL_CAVEAT.to_string(),
        stamp,
    })
}

const THREEFOLD_HEADER: [&str; 8] = ["section", "method", "value", "n_used", "failures", "datasets", "by_kind", "text"];

impl ThreefoldReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ReportError> {
        serde_json::from_str(s).map_err(|e| ReportError::Malformed(e.to_string()))
    }

    /// One row per (section, method) plus metadata rows carrying the note,
    /// caveat and stamp in the `text` column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(THREEFOLD_HEADER)?;
        for (section, vals) in [("discard_single", &self.discard_single), ("discard_all", &self.discard_all)] {
            for m in &self.methods {
                let v = &vals[m];
                w.write_record([section, m.as_str(), &format_value(v.value), &v.n_used.to_string(), "", "", "", ""])?;
            }
        }
        for m in &self.methods {
            let fp = &self.failure_proportions[m];
            let by_kind = fp
                .by_kind
                .iter()
                .map(|(k, v)| format!("{}={v}", k.as_str()))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                "failure_proportion",
                m.as_str(),
                &fp.overall.to_string(),
                "",
                &fp.failures.to_string(),
                &fp.datasets.to_string(),
                &by_kind,
                "",
            ])?;
        }
        let mut meta = vec![("caveat", self.caveat.clone())];
        if let Some(n) = &self.note {
            meta.push(("note", n.clone()));
        }
        meta.push(("seed", self.stamp.seed.to_string()));
        meta.push(("config_digest", self.stamp.config_digest.clone()));
        meta.push(("version", self.stamp.version.clone()));
        for (k, v) in meta {
            w.write_record([k, "", "", "", "", "", "", &v])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, ReportError> {
        let bad = |s: String| ReportError::Malformed(s);
        let mut rdr = csv::Reader::from_reader(r);
        if rdr.headers()?.iter().ne(THREEFOLD_HEADER) {
            return Err(bad("unexpected header".into()));
        }
        let mut methods: Vec<MethodId> = Vec::new();
        let mut single = BTreeMap::new();
        let mut all = BTreeMap::new();
        let mut fps = BTreeMap::new();
        let (mut caveat, mut note, mut seed, mut digest, mut version) = (None, None, None, None, None);
        for rec in rdr.records() {
            let rec = rec?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| f(i).parse::<usize>().map_err(|e| bad(format!("{}: {e}", f(i))));
            match f(0) {
                s @ ("discard_single" | "discard_all") => {
                    let m = MethodId::new(f(1))?;
                    let (basis, map) = if s == "discard_single" {
                        if !methods.contains(&m) {
                            methods.push(m.clone());
                        }
                        (Basis::DiscardSingle, &mut single)
                    } else {
                        (Basis::DiscardAll, &mut all)
                    };
                    let value = parse_value(f(2)).map_err(bad)?;
                    map.insert(m, AggregateValue { value, n_used: num(3)?, basis });
                }
                "failure_proportion" => {
                    let m = MethodId::new(f(1))?;
                    let mut by_kind = BTreeMap::new();
                    for part in f(6).split(';').filter(|p| !p.is_empty()) {
                        let (k, v) = part.split_once('=').ok_or_else(|| bad(part.to_string()))?;
                        let k = FailureKind::parse(k).ok_or_else(|| bad(k.to_string()))?;
                        by_kind.insert(k, v.parse::<f64>().map_err(|e| bad(e.to_string()))?);
                    }
                    let overall = f(2).parse::<f64>().map_err(|e| bad(e.to_string()))?;
                    fps.insert(m, FailureProportion { overall, failures: num(4)?, datasets: num(5)?, by_kind });
                }
                "caveat" => caveat = Some(f(7).to_string()),
                "note" => note = Some(f(7).to_string()),
                "seed" => seed = Some(f(7).parse::<u64>().map_err(|e| bad(e.to_string()))?),
                "config_digest" => digest = Some(f(7).to_string()),
                "version" => version = Some(f(7).to_string()),
                other => return Err(bad(format!("unknown section `{other}`"))),
            }
        }
        let complete = |m: &BTreeMap<MethodId, _>| methods.iter().all(|k| m.contains_key(k)) && m.len() == methods.len();
        if !complete(&all) || !methods.iter().all(|k| fps.contains_key(k)) || fps.len() != methods.len() {
            return Err(bad("sections cover different methods".into()));
        }
        Ok(ThreefoldReport {
            methods,
            discard_single: single,
            discard_all: all,
            failure_proportions: fps,
            note,
            caveat: caveat.ok_or_else(|| bad("missing caveat".into()))?,
            stamp: ReproStamp {
                seed: seed.ok_or_else(|| bad("missing seed".into()))?,
                config_digest: digest.ok_or_else(|| bad("missing config digest".into()))?,
                version: version.ok_or_else(|| bad("missing version".into()))?,
            },
        })
    }
}

// ---------------------------------------------------------------------------
// Failure summary
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureAnnotation {
    pub method: MethodId,
    pub datasets: Vec<DatasetId>,
    /// Human-written account of how method and data interact.
    pub narrative: String,
    /// Failure details captured from the table.
    #[serde(default)]
    pub auto_facts: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElapsedSummary {
    pub min_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFailureSummary {
    pub method: MethodId,
    pub counts: BTreeMap<FailureKind, usize>,
    pub proportion: f64,
    pub datasets: Vec<DatasetId>,
    /// `dataset: Kind(detail)` for every failure.
    pub facts: Vec<String>,
    pub elapsed: Option<ElapsedSummary>,
    pub annotations: Vec<FailureAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSummary {
    pub methods: Vec<MethodFailureSummary>,
    /// Data sets failed by at least `challenging_threshold` of the methods.
    pub challenging: Vec<DatasetId>,
    pub challenging_threshold: f64,
    pub stamp: ReproStamp,
}

pub const DEFAULT_CHALLENGING_THRESHOLD: f64 = 0.5;

fn elapsed_summary(mut ms: Vec<f64>) -> Option<ElapsedSummary> {
    if ms.is_empty() {
        return None;
    }
    ms.sort_by(f64::total_cmp);
    let n = ms.len();
    let median = if n % 2 == 1 { ms[n / 2] } else { 0.5 * (ms[n / 2 - 1] + ms[n / 2]) };
    Some(ElapsedSummary {
        min_ms: ms[0],
        median_ms: median,
        max_ms: ms[n - 1],
        total_ms: ms.iter().sum(),
    })
}

pub fn emit_failure_summary(
    table: &ResultTable,
    annotations: &[FailureAnnotation],
    challenging_threshold: f64,
    stamp: ReproStamp,
) -> Result<FailureSummary, ReportError> {
    let mut by_method: BTreeMap<MethodId, Vec<FailureAnnotation>> = BTreeMap::new();
    for a in annotations {
        let mi = table.method_index(&a.method)?;
        let mut a = a.clone();
        a.auto_facts.clear();
        for d in &a.datasets {
            let di = table.dataset_index(d)?;
            match table.cell_at(mi, di).failure_ref() {
                Some(f) => a.auto_facts.push(format!("{d}: {f}")),
                None => {
                    return Err(ReportError::DanglingAnnotation {
                        method: a.method.to_string(),
                        dataset: d.to_string(),
                    })
                }
            }
        }
        by_method.entry(a.method.clone()).or_default().push(a);
    }

    let n_methods = table.methods().len();
    let mut fail_counts = vec![0usize; table.datasets().len()];
    let mut methods = Vec::with_capacity(n_methods);
    for (mi, m) in table.methods().iter().enumerate() {
        let mut counts: BTreeMap<FailureKind, usize> = FailureKind::ALL.into_iter().map(|k| (k, 0)).collect();
        let mut datasets = Vec::new();
        let mut facts = Vec::new();
        let mut elapsed = Vec::new();
        for (di, d) in table.datasets().iter().enumerate() {
            let cell = table.cell_at(mi, di);
            elapsed.push(cell.elapsed.as_secs_f64() * 1000.0);
            if let Some(f) = cell.failure_ref() {
                *counts.get_mut(&f.kind).expect("all kinds") += 1;
                datasets.push(d.clone());
                facts.push(format!("{d}: {f}"));
                fail_counts[di] += 1;
            }
        }
        methods.push(MethodFailureSummary {
            method: m.clone(),
            proportion: datasets.len() as f64 / table.datasets().len().max(1) as f64,
            counts,
            datasets,
            facts,
            elapsed: elapsed_summary(elapsed),
            annotations: by_method.remove(m).unwrap_or_default(),
        });
    }
    let challenging = table
        .datasets()
        .iter()
        .zip(&fail_counts)
        .filter(|(_, &c)| c > 0 && c as f64 >= challenging_threshold * n_methods as f64)
        .map(|(d, _)| d.clone())
        .collect();
    Ok(FailureSummary {
        methods,
        challenging,
        challenging_threshold,
        stamp,
    })
}

// ---------------------------------------------------------------------------
// Rank divergence
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankShift {
    pub method: MethodId,
    pub rank_a: usize,
    pub rank_b: usize,
    /// `rank_b - rank_a`.
    pub shift: i64,
    pub abs_shift: usize,
    pub flips_best: bool,
    pub flips_worst: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankDivergence {
    pub label_a: String,
    pub label_b: String,
    pub rows: Vec<RankShift>,
    pub max_shift: usize,
    /// Methods attaining `max_shift` (empty when nothing moves).
    pub max_shift_methods: Vec<MethodId>,
}

pub fn emit_rank_divergence(
    ranks_a: &BTreeMap<MethodId, usize>,
    ranks_b: &BTreeMap<MethodId, usize>,
    label_a: &str,
    label_b: &str,
) -> Result<RankDivergence, ReportError> {
    if !ranks_a.keys().eq(ranks_b.keys()) {
        let a: BTreeSet<_> = ranks_a.keys().collect();
        let b: BTreeSet<_> = ranks_b.keys().collect();
        let diff: Vec<String> = a.symmetric_difference(&b).map(|m| m.to_string()).collect();
        return Err(ReportError::MethodMismatch(diff.join(", ")));
    }
    let worst_a = ranks_a.values().max().copied().unwrap_or(0);
    let worst_b = ranks_b.values().max().copied().unwrap_or(0);
    let rows: Vec<RankShift> = ranks_a
        .iter()
        .map(|(m, &ra)| {
            let rb = ranks_b[m];
            RankShift {
                method: m.clone(),
                rank_a: ra,
                rank_b: rb,
                shift: rb as i64 - ra as i64,
                abs_shift: ra.abs_diff(rb),
                flips_best: (ra == 1) != (rb == 1),
                flips_worst: (ra == worst_a) != (rb == worst_b),
            }
        })
        .collect();
    let max_shift = rows.iter().map(|r| r.abs_shift).max().unwrap_or(0);
    let max_shift_methods = rows
        .iter()
        .filter(|r| max_shift > 0 && r.abs_shift == max_shift)
        .map(|r| r.method.clone())
        .collect();
    Ok(RankDivergence {
        label_a: label_a.to_string(),
        label_b: label_b.to_string(),
        rows,
        max_shift,
        max_shift_methods,
    })
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

const PALETTE: [&str; 10] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666", "#1f78b4", "#b15928",
];
const FAILURE_COLOR: &str = "#d62728";

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Svg {
    out: String,
}

impl Svg {
    fn new(w: f64, h: f64) -> Self {
        let mut out = String::new();
        let _ = write!(
            out,
            r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">
<rect width="{w}" height="{h}" fill="white"/>
"#
        );
        Self { out }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(self.out, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{}</text>"#, esc(s));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, dash: bool) {
        let dash = if dash { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            self.out,
            r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{stroke}"{dash}/>"#
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, dash: bool) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let dash = if dash { r#" stroke-dasharray="5 3""# } else { "" };
        let _ = writeln!(
            self.out,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"{dash}/>"#,
            p.join(" ")
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.out, r#"<circle cx="{x:.1}" cy="{y:.1}" r="{r}" fill="{fill}"/>"#);
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        let _ = writeln!(
            self.out,
            r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{h:.1}" fill="{fill}" stroke="{stroke}"/>"#
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Rank-by-scenario chart. Each series is drawn once per analysis; the
/// second analysis, if any, is dashed.
fn rank_panel(
    title: &str,
    n_scenarios: usize,
    analyses: &[(&str, Vec<BTreeMap<MethodId, usize>>)],
) -> String {
    let methods: BTreeSet<MethodId> = analyses
        .iter()
        .flat_map(|(_, per)| per.iter().flat_map(|r| r.keys().cloned()))
        .collect();
    let methods: Vec<MethodId> = methods.into_iter().collect();
    let max_rank = methods.len().max(1);
    let (left, top, pw, ph) = (50.0, 40.0, 60.0 * n_scenarios.max(1) as f64, 28.0 * max_rank as f64);
    let legend_w = 170.0;
    let mut svg = Svg::new(left + pw + legend_w + 20.0, top + ph + 60.0);
    svg.text(left + pw / 2.0, 20.0, "middle", title);
    let x = |s: usize| left + 30.0 + s as f64 * 60.0;
    let y = |r: usize| top + (r as f64 - 0.5) * ph / max_rank as f64;
    svg.line(left, top, left, top + ph, "black", false);
    svg.line(left, top + ph, left + pw, top + ph, "black", false);
    for r in 1..=max_rank {
        svg.text(left - 8.0, y(r) + 4.0, "end", &r.to_string());
    }
    for s in 0..n_scenarios {
        svg.text(x(s), top + ph + 16.0, "middle", &(s + 1).to_string());
    }
    svg.text(left + pw / 2.0, top + ph + 34.0, "middle", "scenario");
    svg.text(14.0, top + ph / 2.0, "middle", "rank");
    for (ai, (_, per)) in analyses.iter().enumerate() {
        for (mi, m) in methods.iter().enumerate() {
            let color = PALETTE[mi % PALETTE.len()];
            let pts: Vec<(f64, f64)> = per
                .iter()
                .enumerate()
                .filter_map(|(s, r)| r.get(m).map(|&rk| (x(s) + ai as f64 * 4.0, y(rk))))
                .collect();
            svg.polyline(&pts, color, ai > 0);
            for &(px, py) in &pts {
                svg.circle(px, py, 2.5, color);
            }
        }
    }
    let lx = left + pw + 20.0;
    for (mi, m) in methods.iter().enumerate() {
        let ly = top + 10.0 + mi as f64 * 16.0;
        svg.line(lx, ly - 4.0, lx + 18.0, ly - 4.0, PALETTE[mi % PALETTE.len()], false);
        svg.text(lx + 24.0, ly, "start", m.as_str());
    }
    if analyses.len() > 1 {
        let ly = top + 20.0 + methods.len() as f64 * 16.0;
        for (ai, (label, _)) in analyses.iter().enumerate() {
            let ly = ly + ai as f64 * 16.0;
            svg.line(lx, ly - 4.0, lx + 18.0, ly - 4.0, "black", ai > 0);
            svg.text(lx + 24.0, ly, "start", label);
        }
    }
    svg.finish()
}

/// Panel A compares discard-single and discard-all ranks; panel B shows the
/// fallback pipelines.
pub fn render_or_rank_panels(out: &OrStudyOutput) -> (String, String) {
    let n = out.scenarios.len();
    let single: Vec<_> = out.scenarios.iter().map(|s| s.ranks_single.clone()).collect();
    let all: Vec<_> = out.scenarios.iter().map(|s| s.ranks_all.clone()).collect();
    let pipes: Vec<_> = out.scenarios.iter().map(|s| s.ranks_pipelines.clone()).collect();
    (
        rank_panel("A: discard failing data sets (single vs. all)", n, &[("single", single), ("all", all)]),
        rank_panel("B: fallback pipelines", n, &[("fallback", pipes)]),
    )
}

/// Grouped bars: one group per handling, one bar per method.
pub fn render_ci_coverage(report: &CiStudyReport) -> String {
    let groups = ["discarded (single)", "discarded (all)", "not covering", "zero width"];
    let (left, top, gw, ph) = (50.0, 40.0, 120.0, 220.0);
    let mut svg = Svg::new(left + gw * groups.len() as f64 + 120.0, top + ph + 60.0);
    svg.text(left + gw * 2.0, 20.0, "middle", &format!("Empirical coverage (c = {})", report.c));
    let y = |v: f64| top + ph * (1.0 - v);
    svg.line(left, top, left, top + ph, "black", false);
    svg.line(left, top + ph, left + gw * groups.len() as f64, top + ph, "black", false);
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        svg.text(left - 6.0, y(t) + 4.0, "end", &format!("{t:.2}"));
    }
    let bw = (gw - 30.0) / report.rows.len().max(1) as f64;
    for (gi, g) in groups.iter().enumerate() {
        let gx = left + gi as f64 * gw + 15.0;
        for (ri, r) in report.rows.iter().enumerate() {
            let v = [r.discard_single, r.discard_all, r.count_as_noncover, r.zero_width][gi];
            let v = if v.is_finite() { v } else { 0.0 };
            let x = gx + ri as f64 * bw;
            svg.rect(x, y(v), bw - 4.0, ph * v, PALETTE[ri % PALETTE.len()], "black");
            svg.text(x + bw / 2.0 - 2.0, y(v) - 4.0, "middle", &format!("{v:.2}"));
        }
        svg.text(gx + (gw - 30.0) / 2.0, top + ph + 16.0, "middle", g);
    }
    let lx = left + gw * groups.len() as f64 + 20.0;
    for (ri, r) in report.rows.iter().enumerate() {
        let ly = top + 10.0 + ri as f64 * 16.0;
        svg.rect(lx, ly - 9.0, 10.0, 10.0, PALETTE[ri % PALETTE.len()], "black");
        svg.text(lx + 16.0, ly, "start", &r.method);
    }
    svg.finish()
}

/// One box of a boxplot figure.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSeries {
    pub label: String,
    pub values: Vec<f64>,
    /// Failed data sets, drawn as scatters beyond the value range.
    pub failures: usize,
}

impl BoxSeries {
    /// Successful values and failure count of one method column.
    pub fn from_table(table: &ResultTable, method: &MethodId) -> Result<Self, TableError> {
        let mi = table.method_index(method)?;
        let mut values = Vec::new();
        let mut failures = 0;
        for c in table.column(mi) {
            match c.value() {
                Some(v) => values.push(v),
                None => failures += 1,
            }
        }
        Ok(Self {
            label: method.to_string(),
            values,
            failures,
        })
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Boxplots with failures marked above the plotted range, offset by
/// `failure_offset` times the value range.
pub fn render_boxplot(title: &str, series: &[BoxSeries], failure_offset: f64) -> String {
    let all: Vec<f64> = series.iter().flat_map(|s| s.values.iter().copied()).collect();
    let (mut lo, mut hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi == lo {
        hi = lo + 1.0;
    }
    let range = hi - lo;
    let fail_y = hi + failure_offset * range;
    let any_fail = series.iter().any(|s| s.failures > 0);
    let top_v = if any_fail { fail_y + 0.5 * failure_offset * range } else { hi };
    let (left, top, bw, ph) = (60.0, 40.0, 70.0, 240.0);
    let mut svg = Svg::new(left + bw * series.len().max(1) as f64 + 20.0, top + ph + 50.0);
    svg.text(left + bw * series.len() as f64 / 2.0, 20.0, "middle", title);
    let y = |v: f64| top + ph * (top_v - v) / (top_v - lo);
    svg.line(left, top, left, top + ph, "black", false);
    svg.line(left, top + ph, left + bw * series.len() as f64, top + ph, "black", false);
    svg.text(left - 6.0, y(lo) + 4.0, "end", &format!("{lo:.3}"));
    svg.text(left - 6.0, y(hi) + 4.0, "end", &format!("{hi:.3}"));
    if any_fail {
        svg.line(left, y(hi), left + bw * series.len() as f64, y(hi), "#999999", true);
        svg.text(left - 6.0, y(fail_y) + 4.0, "end", "failed");
    }
    for (i, s) in series.iter().enumerate() {
        let cx = left + (i as f64 + 0.5) * bw;
        svg.text(cx, top + ph + 16.0, "middle", &s.label);
        if !s.values.is_empty() {
            let mut v = s.values.clone();
            v.sort_by(f64::total_cmp);
            let (q1, q2, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
            let iqr = q3 - q1;
            let wlo = v.iter().copied().find(|&x| x >= q1 - 1.5 * iqr).unwrap_or(v[0]);
            let whi = v.iter().rev().copied().find(|&x| x <= q3 + 1.5 * iqr).unwrap_or(v[v.len() - 1]);
            let half = bw * 0.3;
            svg.line(cx, y(whi), cx, y(q3), "black", false);
            svg.line(cx, y(q1), cx, y(wlo), "black", false);
            svg.rect(cx - half, y(q3), 2.0 * half, (y(q1) - y(q3)).max(0.5), "#cfe2f3", "black");
            svg.line(cx - half, y(q2), cx + half, y(q2), "black", false);
            for &o in v.iter().filter(|&&x| x < wlo || x > whi) {
                svg.circle(cx, y(o), 2.0, "black");
            }
        }
        for k in 0..s.failures {
            let jitter = if s.failures > 1 { (k as f64 / (s.failures - 1) as f64 - 0.5) * bw * 0.5 } else { 0.0 };
            svg.circle(cx + jitter, y(fail_y), 3.0, FAILURE_COLOR);
        }
    }
    svg.finish()
}
