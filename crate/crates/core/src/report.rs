//! Text tables, histogram CSVs and the JSON summary.
//!
//! All JSON leaves this module with object keys sorted and floats in their
//! shortest round-trip form, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::criteria::{ConditionTally, Histogram, NormRatioProfile, ProjectionReport, TallyCells};
use crate::geometry::MeasureKind;

/// JSON Schema for [`summary_report`] output.
pub const SUMMARY_SCHEMA: &str = include_str!("../schema/summary.schema.json");

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing cell: {0}")]
    MissingCell(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ReportError>;

/// Recursively rebuilds objects with keys in ascending order.
pub fn canonical(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut entries: Vec<(String, Value)> = m.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(
                entries
                    .into_iter()
                    .map(|(k, v)| (k, canonical(v)))
                    .collect::<Map<_, _>>(),
            )
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonical).collect()),
        other => other,
    }
}

pub fn to_canonical_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&canonical(serde_json::to_value(v)?))?;
    s.push('\n');
    Ok(s)
}

/// One row of a tally table.
#[derive(Debug, Clone, Copy)]
pub struct TallyRow<'a> {
    pub model: &'a str,
    pub measure: MeasureKind,
    pub tally: &'a ConditionTally,
}

fn check_row(row: &TallyRow<'_>) -> Result<()> {
    if row.tally.n_samples == 0 || row.tally.n_grid_points() == 0 {
        return Err(ReportError::MissingCell(format!(
            "{} / {}: no samples or grid points",
            row.model, row.measure
        )));
    }
    Ok(())
}

/// Full-precision JSON for one tally, with grid metadata.
pub fn tally_json(tally: &ConditionTally) -> Value {
    let names = tally.cell_names();
    let percents: Map<String, Value> = names
        .iter()
        .zip(tally.percentages())
        .map(|(n, p)| (n.to_string(), json!(p)))
        .collect();
    let counts = match tally.cells {
        TallyCells::Pair { tt, tf, ft, ff } => json!({"tt": tt, "tf": tf, "ft": ft, "ff": ff}),
        TallyCells::Single { t, f } => json!({"t": t, "f": f}),
    };
    json!({
        "percent": percents,
        "counts": counts,
        "n_samples": tally.n_samples,
        "n_grid_points": tally.n_grid_points(),
        "grids": tally.grids.iter().map(|g| json!({
            "lo": g.lo(),
            "hi": g.hi(),
            "count": g.count(),
        })).collect::<Vec<_>>(),
    })
}

/// Aligned text table, one row per (model, measure), percentages to two
/// decimals in `tt tf ft ff` (or `t f`) order.
pub fn render_tally_table(rows: &[TallyRow<'_>]) -> Result<String> {
    let first = rows
        .first()
        .ok_or_else(|| ReportError::MissingCell("no rows".into()))?;
    let names = first.tally.cell_names();
    for r in rows {
        check_row(r)?;
        if r.tally.cell_names() != names {
            return Err(ReportError::MissingCell(format!(
                "{} / {}: mixed one- and two-condition tallies",
                r.model, r.measure
            )));
        }
    }
    let model_w = rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    write!(out, "{:<model_w$}  {:<7}", "model", "measure").unwrap();
    for n in names {
        write!(out, "  {n:>7}").unwrap();
    }
    out.push('\n');
    for r in rows {
        write!(out, "{:<model_w$}  {:<7}", r.model, r.measure.name()).unwrap();
        for p in r.tally.percentages() {
            write!(out, "  {p:>7.2}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn tally_table_json(rows: &[TallyRow<'_>]) -> Result<Value> {
    rows.iter()
        .map(|r| {
            check_row(r)?;
            Ok(json!({
                "model": r.model,
                "measure": r.measure,
                "tally": tally_json(r.tally),
            }))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| canonical(Value::Array(v)))
}

/// What a histogram export describes.
#[derive(Debug, Clone, Copy)]
pub enum HistogramSource<'a> {
    Angles(&'a ProjectionReport),
    NormRatios(&'a NormRatioProfile),
}

impl HistogramSource<'_> {
    fn histogram(&self) -> &Histogram {
        match self {
            HistogramSource::Angles(r) => &r.profile.histogram,
            HistogramSource::NormRatios(p) => &p.histogram,
        }
    }

    /// Classification fractions and out-of-range counts.
    pub fn sidecar(&self) -> Value {
        let h = self.histogram();
        let mut v = match self {
            HistogramSource::Angles(r) => {
                let s = &r.summary;
                json!({
                    "kind": "projection",
                    "role": s.role,
                    "n_samples": s.n_samples,
                    "skipped": s.n_skipped,
                    "counts": s.counts,
                    "fractions": {
                        "middle": s.middle_fraction,
                        "beyond_a": s.beyond_a_fraction,
                        "beyond_b": s.beyond_b_fraction,
                        "opposite": s.opposite_fraction,
                        "degenerate": s.degenerate_fraction,
                    },
                    "near_a": s.near_a,
                    "near_a_fraction": s.near_a_fraction,
                    "union_cases": s.union_cases,
                })
            }
            HistogramSource::NormRatios(p) => json!({
                "kind": "norm_ratio",
                "n_samples": p.ratios.len(),
                "median": p.median,
                "band": p.band,
                "within_band": p.within_band,
                "within_band_fraction": p.within_band_fraction,
            }),
        };
        v["underflow"] = json!(h.underflow);
        v["overflow"] = json!(h.overflow);
        v["range"] = json!([h.lo, h.hi]);
        canonical(v)
    }
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_left,bin_right,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let (l, r) = h.edges(i);
        writeln!(out, "{l},{r},{c}").unwrap();
    }
    out
}

/// Writes `path` (CSV) and a JSON sidecar next to it; returns the sidecar
/// path.
pub fn export_histogram(source: HistogramSource<'_>, path: &Path) -> Result<PathBuf> {
    fs::write(path, histogram_csv(source.histogram()))?;
    let sidecar = path.with_extension("json");
    let mut f = fs::File::create(&sidecar)?;
    f.write_all(to_canonical_json(&source.sidecar())?.as_bytes())?;
    Ok(sidecar)
}

/// One evaluated (model, measure, criterion) combination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryEntry {
    pub model_id: String,
    /// `None` for the projection criteria, which use no measure.
    pub measure: Option<MeasureKind>,
    pub criterion: String,
    pub payload: Value,
    pub config: Value,
    pub corpus_digest: String,
    pub tool_version: String,
}

/// Canonical JSON document holding every entry, in the order given.
pub fn summary_report(entries: &[SummaryEntry]) -> Result<String> {
    to_canonical_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "entries": entries,
    }))
}
