//! Composition samples and the synthesis pipeline that produces them.
//!
//! Three consecutive sentences `s_prev, s_curr, s_next` are taken from a
//! document and the pairs `(s_prev, s_curr)` and `(s_curr, s_next)` fused
//! into `s1` and `s2`. From those five sentences:
//!
//! | op         | pattern | inputs            | target   |
//! |------------|---------|-------------------|----------|
//! | overlap    | 1       | {s1, s2}          | s_curr   |
//! | union      | 1       | {s_prev, s_curr}  | s1       |
//! | union      | 2       | {s_curr, s_next}  | s2       |
//! | difference | 1       | (s1, s_prev)      | s_curr   |
//! | difference | 2       | (s1, s_curr)      | s_prev   |
//! | difference | 3       | (s1, s2)          | s_prev   |
//! | difference | 4       | (s2, s_curr)      | s_next   |
//! | difference | 5       | (s2, s_next)      | s_curr   |
//! | difference | 6       | (s2, s1)          | s_next   |
//!
//! Difference patterns 1–3 require `(s_prev, s_curr)` to pass the low
//! similarity filter, patterns 4–6 require `(s_curr, s_next)` to pass.

pub mod annotation;
pub mod fusion;
pub mod pipeline;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criteria::EmbeddedSample;
use crate::embedstore::EmbeddingSource;
use crate::geometry::{measure, GeometryError, MeasureKind};

pub use annotation::{annotation_stats, AnnotationRecord, AnnotationSummary, ScoreStats};
pub use fusion::{Fuser, FusionError, FusionProvider, FusionRequest, FusionResult, RetryPolicy};
pub use pipeline::{synthesize, FilterMode, SkippedTriple, SynthOutput};

/// Similarity below which a sentence pair counts as sharing little content.
pub const DEFAULT_FILTER_THRESHOLD: f64 = 0.25;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid sample `{id}`: {message}")]
    InvalidSample { id: String, message: String },
    #[error("no embedding for sentence {0:?}")]
    MissingEmbedding(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("no records")]
    EmptyInput,
    #[error("sample `{sample_id}`: score {score} outside 0..=4")]
    OutOfRangeScore { sample_id: String, score: i64 },
    #[error("sample `{sample_id}`: {message}")]
    InvalidRecord { sample_id: String, message: String },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// The three set-like operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Overlap,
    Difference,
    Union,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Overlap => "overlap",
            Op::Difference => "difference",
            Op::Union => "union",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "overlap" | "textoverlap" => Ok(Op::Overlap),
            "difference" | "textdifference" => Ok(Op::Difference),
            "union" | "textunion" => Ok(Op::Union),
            other => Err(format!("unknown operator `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub triple_index: usize,
    pub pattern_id: u8,
}

/// One `(inputs, target)` instance of an operator.
///
/// Overlap and union inputs are unordered (stored in corpus order);
/// difference inputs are ordered, the target carrying what `a` has and `b`
/// lacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionSample {
    pub id: String,
    pub op: Op,
    pub a: String,
    pub b: String,
    pub target: String,
    pub ordered: bool,
    pub provenance: Provenance,
    pub filter_sim: Option<f64>,
}

impl CompositionSample {
    fn build(
        triple: &SentenceTriple,
        op: Op,
        pattern_id: u8,
        (a, b, target): (&str, &str, &str),
        filter_sim: Option<f64>,
    ) -> Self {
        Self {
            id: format!("{}:{}:{}{}", triple.doc_id, triple.index, op, pattern_id),
            op,
            a: a.to_string(),
            b: b.to_string(),
            target: target.to_string(),
            ordered: op == Op::Difference,
            provenance: Provenance {
                doc_id: triple.doc_id.clone(),
                triple_index: triple.index,
                pattern_id,
            },
            filter_sim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| {
            Err(DatasetError::InvalidSample {
                id: self.id.clone(),
                message: message.to_string(),
            })
        };
        if self.a.is_empty() || self.b.is_empty() || self.target.is_empty() {
            return bad("empty sentence");
        }
        if self.ordered != (self.op == Op::Difference) {
            return bad("only difference samples are ordered");
        }
        Ok(())
    }

    pub fn texts(&self) -> [&str; 3] {
        [&self.a, &self.b, &self.target]
    }
}

/// A document, already split into sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceTriple {
    pub s_prev: String,
    pub s_curr: String,
    pub s_next: String,
    pub doc_id: String,
    pub index: usize,
}

/// Width-3, stride-1 windows over a document's sentences.
pub fn extract_triples(sentences: &[String], doc_id: &str) -> Vec<SentenceTriple> {
    sentences
        .windows(3)
        .enumerate()
        .map(|(index, w)| SentenceTriple {
            s_prev: w[0].clone(),
            s_curr: w[1].clone(),
            s_next: w[2].clone(),
            doc_id: doc_id.to_string(),
            index,
        })
        .collect()
}

/// Outcome of the low-similarity check on one sentence pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterDecision {
    Passed {
        similarity: f64,
    },
    Rejected {
        similarity: f64,
    },
    /// Filtering disabled; difference samples are emitted without a score.
    Unfiltered,
}

impl FilterDecision {
    pub fn admits(&self) -> bool {
        !matches!(self, FilterDecision::Rejected { .. })
    }

    pub fn similarity(&self) -> Option<f64> {
        match *self {
            FilterDecision::Passed { similarity } | FilterDecision::Rejected { similarity } => {
                Some(similarity)
            }
            FilterDecision::Unfiltered => None,
        }
    }
}

/// Filter decisions for both adjacent pairs of a triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferenceFilterResult {
    pub prev_curr: FilterDecision,
    pub curr_next: FilterDecision,
}

impl DifferenceFilterResult {
    pub fn unfiltered() -> Self {
        Self {
            prev_curr: FilterDecision::Unfiltered,
            curr_next: FilterDecision::Unfiltered,
        }
    }
}

/// Passes iff the cosine similarity of the pair is strictly below `threshold`.
pub fn difference_filter(
    pair: (&str, &str),
    source: &dyn EmbeddingSource,
    threshold: f64,
) -> Result<FilterDecision> {
    let get = |t: &str| {
        source
            .embedding(t)
            .ok_or_else(|| DatasetError::MissingEmbedding(t.to_string()))
    };
    let similarity = measure(MeasureKind::Cosine, get(pair.0)?, get(pair.1)?)?;
    Ok(if similarity < threshold {
        FilterDecision::Passed { similarity }
    } else {
        FilterDecision::Rejected { similarity }
    })
}

/// The sample family of one triple, in table order.
pub fn assemble_samples(
    triple: &SentenceTriple,
    s1: &str,
    s2: &str,
    filter: &DifferenceFilterResult,
) -> Vec<CompositionSample> {
    let (prev, curr, next) = (
        triple.s_prev.as_str(),
        triple.s_curr.as_str(),
        triple.s_next.as_str(),
    );
    let mut out = vec![
        CompositionSample::build(triple, Op::Overlap, 1, (s1, s2, curr), None),
        CompositionSample::build(triple, Op::Union, 1, (prev, curr, s1), None),
        CompositionSample::build(triple, Op::Union, 2, (curr, next, s2), None),
    ];
    if filter.prev_curr.admits() {
        let sim = filter.prev_curr.similarity();
        for (pattern, texts) in [
            (1, (s1, prev, curr)),
            (2, (s1, curr, prev)),
            (3, (s1, s2, prev)),
        ] {
            out.push(CompositionSample::build(
                triple,
                Op::Difference,
                pattern,
                texts,
                sim,
            ));
        }
    }
    if filter.curr_next.admits() {
        let sim = filter.curr_next.similarity();
        for (pattern, texts) in [
            (4, (s2, curr, next)),
            (5, (s2, next, curr)),
            (6, (s2, s1, next)),
        ] {
            out.push(CompositionSample::build(
                triple,
                Op::Difference,
                pattern,
                texts,
                sim,
            ));
        }
    }
    out
}

pub fn write_samples(samples: &[CompositionSample], w: &mut impl Write) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut *w, s).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_samples_file(samples: &[CompositionSample], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_samples(samples, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_samples(r: impl BufRead) -> Result<Vec<CompositionSample>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: CompositionSample =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

pub fn read_samples_file(path: &Path) -> Result<Vec<CompositionSample>> {
    read_samples(BufReader::new(fs::File::open(path)?))
}

/// Loads a corpus: a directory of `.txt` documents, a single `.txt`
/// document, or a JSONL file of `{"doc_id", "sentences"}` objects.
/// Text documents hold one sentence per line; blank lines are skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "txt"))
            .collect();
        files.sort();
        return files.iter().map(|p| read_text_document(p)).collect();
    }
    if path.extension().is_some_and(|e| e == "jsonl") {
        let mut docs = Vec::new();
        for (i, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            docs.push(
                serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?,
            );
        }
        return Ok(docs);
    }
    Ok(vec![read_text_document(path)?])
}

fn read_text_document(path: &Path) -> Result<Document> {
    let text = fs::read_to_string(path)?;
    let doc_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let sentences = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    Ok(Document { doc_id, sentences })
}

/// Samples whose three sentences all have embeddings.
#[derive(Debug)]
pub struct Resolution<'a> {
    pub embedded: Vec<EmbeddedSample<'a>>,
    /// Index into the input of each entry of `embedded`.
    pub kept: Vec<usize>,
    /// Sentences without an embedding, deduplicated, in first-seen order.
    pub missing: Vec<String>,
}

pub fn resolve_samples<'a, S: EmbeddingSource + ?Sized>(
    samples: &[CompositionSample],
    source: &'a S,
) -> Resolution<'a> {
    let mut res = Resolution {
        embedded: Vec::with_capacity(samples.len()),
        kept: Vec::with_capacity(samples.len()),
        missing: Vec::new(),
    };
    let mut seen = std::collections::HashSet::new();
    for (i, s) in samples.iter().enumerate() {
        let vs = s.texts().map(|t| source.embedding(t));
        if let [Some(a), Some(b), Some(t)] = vs {
            res.embedded.push(EmbeddedSample::new(a, b, t));
            res.kept.push(i);
        } else {
            for (t, v) in s.texts().iter().zip(vs) {
                if v.is_none() && seen.insert(t.to_string()) {
                    res.missing.push(t.to_string());
                }
            }
        }
    }
    res
}
