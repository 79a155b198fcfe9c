//! Corpus → triples → fusions → samples.

use rayon::prelude::*;

use super::fusion::{Fuser, FusionError, FusionRequest};
use super::{
    assemble_samples, difference_filter, extract_triples, CompositionSample, DatasetError,
    DifferenceFilterResult, Document, Op, Result, SentenceTriple,
};
use crate::embedstore::EmbeddingSource;

pub enum FilterMode<'a> {
    /// Emit every difference pattern, without a similarity score.
    Disabled,
    Cosine {
        source: &'a dyn EmbeddingSource,
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedTriple {
    pub doc_id: String,
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub samples: Vec<CompositionSample>,
    pub n_triples: usize,
    pub skipped: Vec<SkippedTriple>,
}

impl SynthOutput {
    pub fn count(&self, op: Op) -> usize {
        self.samples.iter().filter(|s| s.op == op).count()
    }
}

fn filter_triple(t: &SentenceTriple, mode: &FilterMode<'_>) -> Result<DifferenceFilterResult> {
    match *mode {
        FilterMode::Disabled => Ok(DifferenceFilterResult::unfiltered()),
        FilterMode::Cosine { source, threshold } => Ok(DifferenceFilterResult {
            prev_curr: difference_filter((&t.s_prev, &t.s_curr), source, threshold)?,
            curr_next: difference_filter((&t.s_curr, &t.s_next), source, threshold)?,
        }),
    }
}

enum TripleOutcome {
    Samples(Vec<CompositionSample>),
    Skipped(SkippedTriple),
}

fn process(t: &SentenceTriple, fuser: &Fuser, mode: &FilterMode<'_>) -> Result<TripleOutcome> {
    let filter = filter_triple(t, mode)?;
    let fuse = |a: &str, b: &str| -> std::result::Result<String, FusionError> {
        Ok(fuser.fuse(&FusionRequest::new(a, b)?)?.text)
    };
    let fused = fuse(&t.s_prev, &t.s_curr).and_then(|s1| Ok((s1, fuse(&t.s_curr, &t.s_next)?)));
    match fused {
        Ok((s1, s2)) => Ok(TripleOutcome::Samples(assemble_samples(
            t, &s1, &s2, &filter,
        ))),
        Err(e @ (FusionError::EmptyCompletion | FusionError::InvalidRequest(_))) => {
            log::warn!("skipping triple {}:{}: {e}", t.doc_id, t.index);
            Ok(TripleOutcome::Skipped(SkippedTriple {
                doc_id: t.doc_id.clone(),
                index: t.index,
                reason: e.to_string(),
            }))
        }
        Err(e) => Err(DatasetError::Fusion(e)),
    }
}

/// Runs the whole synthesis over `docs`.
///
/// Triples are processed in parallel on the current rayon pool; output is
/// in corpus order. A triple whose fusion comes back empty is dropped whole.
/// Provider outages, an exhausted call budget and missing filter embeddings
/// abort the run.
pub fn synthesize(docs: &[Document], fuser: &Fuser, mode: &FilterMode<'_>) -> Result<SynthOutput> {
    let triples: Vec<SentenceTriple> = docs
        .iter()
        .flat_map(|d| extract_triples(&d.sentences, &d.doc_id))
        .collect();
    let outcomes: Vec<Result<TripleOutcome>> = triples
        .par_iter()
        .map(|t| process(t, fuser, mode))
        .collect();
    let mut out = SynthOutput {
        samples: Vec::new(),
        n_triples: triples.len(),
        skipped: Vec::new(),
    };
    for o in outcomes {
        match o? {
            TripleOutcome::Samples(s) => out.samples.extend(s),
            TripleOutcome::Skipped(s) => out.skipped.push(s),
        }
    }
    Ok(out)
}
