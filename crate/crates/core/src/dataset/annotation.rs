//! Aggregation of 0–4 Likert quality ratings.
//!
//! Each sample carries two or three annotator scores; its score is their
//! mean, and per-operator statistics are taken over those per-sample means.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, Op, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample_id: String,
    pub operator: Op,
    pub scores: Vec<i64>,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if let Some(&score) = self.scores.iter().find(|s| !(0..=4).contains(*s)) {
            return Err(DatasetError::OutOfRangeScore {
                sample_id: self.sample_id.clone(),
                score,
            });
        }
        if !(2..=3).contains(&self.scores.len()) {
            return Err(DatasetError::InvalidRecord {
                sample_id: self.sample_id.clone(),
                message: format!("expected 2 or 3 scores, got {}", self.scores.len()),
            });
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<i64>() as f64 / self.scores.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl ScoreStats {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (i, frac) = (pos.floor() as usize, pos.fract());
            if frac == 0.0 {
                v[i]
            } else {
                v[i] + frac * (v[i + 1] - v[i])
            }
        };
        Some(Self {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: q(0.5),
            q1: q(0.25),
            q3: q(0.75),
            min: v[0],
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub per_operator: BTreeMap<Op, ScoreStats>,
    pub overall: ScoreStats,
}

pub fn annotation_stats(records: &[AnnotationRecord]) -> Result<AnnotationSummary> {
    if records.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let mut by_op: BTreeMap<Op, Vec<f64>> = BTreeMap::new();
    for r in records {
        r.validate()?;
        by_op.entry(r.operator).or_default().push(r.mean());
    }
    let all: Vec<f64> = records.iter().map(AnnotationRecord::mean).collect();
    Ok(AnnotationSummary {
        per_operator: by_op
            .into_iter()
            .map(|(op, v)| (op, ScoreStats::of(&v).expect("nonempty")))
            .collect(),
        overall: ScoreStats::of(&all).expect("nonempty"),
    })
}

/// Reads JSONL records, or CSV with a `sample_id,operator,scores` header
/// where `scores` lists integers separated by `;` or spaces.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    if path.extension().is_some_and(|e| e == "csv") {
        read_annotations_csv(fs::read(path)?.as_slice())
    } else {
        read_annotations_jsonl(BufReader::new(fs::File::open(path)?))
    }
}

pub fn read_annotations_jsonl(r: impl BufRead) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

#[derive(Deserialize)]
struct CsvRow {
    sample_id: String,
    operator: String,
    scores: String,
}

pub fn read_annotations_csv(r: impl std::io::Read) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (i, row) in csv::Reader::from_reader(r)
        .deserialize::<CsvRow>()
        .enumerate()
    {
        let parse_err = |message: String| DatasetError::Parse {
            line: i + 2,
            message,
        };
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        let operator = row.operator.parse::<Op>().map_err(parse_err)?;
        let scores = row
            .scores
            .split(|c: char| c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<i64>()
                    .map_err(|e| parse_err(format!("score `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(AnnotationRecord {
            sample_id: row.sample_id,
            operator,
            scores,
        });
    }
    Ok(out)
}
