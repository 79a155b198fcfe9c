//! Evaluators for the six compositionality criteria.
//!
//! * C1 (overlap) and C3 (difference) are two-condition margin tests averaged
//!   over a Cartesian grid of ε values.
//! * C4 (difference) is a one-condition margin test on `E_A − E_B`.
//! * C2 (overlap), C5 (difference) and C6 (union) project the target
//!   embedding onto the plane of the two inputs and look at where it lands.
//!
//! Tallies are accumulated as integer counts over (sample, grid point)
//! pairs and divided once at the end, so results do not depend on how the
//! per-sample work is split across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    oriented_similarity, plane_basis, project_angles, AnglePair, Embedding, GeometryError,
    MeasureKind, PlaneRegion,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriteriaError {
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("invalid epsilon grid: {0}")]
    InvalidGrid(String),
    #[error("invalid criteria configuration: {0}")]
    InvalidConfig(String),
    #[error("measure `{0}` is not supported by this criterion")]
    UnsupportedMeasure(MeasureKind),
    #[error("sample {sample}: {source}")]
    Geometry {
        sample: usize,
        #[source]
        source: GeometryError,
    },
}

pub type Result<T> = std::result::Result<T, CriteriaError>;

/// Tunables shared by every criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaConfig {
    pub epsilon_count: usize,
    /// Fixed `[lo, hi]` for every ε instead of the per-run min/max.
    pub epsilon_range: Option<(f64, f64)>,
    pub histogram_bins: usize,
    pub histogram_range: (f64, f64),
    pub middle_tolerance: f64,
    pub theta_d: f64,
    pub theta_u1: f64,
    /// Carried for completeness; no case of the union criterion uses it.
    pub theta_u2: f64,
    pub norm_ratio_band: f64,
    pub norm_ratio_range: (f64, f64),
}

impl Default for CriteriaConfig {
    fn default() -> Self {
        Self {
            epsilon_count: 132,
            epsilon_range: None,
            histogram_bins: 50,
            histogram_range: (-0.5, 1.5),
            middle_tolerance: 1e-6,
            theta_d: 0.1,
            theta_u1: 0.1,
            theta_u2: 0.1,
            norm_ratio_band: 0.05,
            norm_ratio_range: (0.0, 2.0),
        }
    }
}

impl CriteriaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CriteriaError::InvalidConfig(m.to_string()));
        if self.epsilon_count == 0 {
            return bad("epsilon_count must be positive");
        }
        if self.histogram_bins == 0 {
            return bad("histogram_bins must be positive");
        }
        let (lo, hi) = self.histogram_range;
        if !(lo <= 0.0 && hi >= 1.0 && lo.is_finite() && hi.is_finite()) {
            return bad("histogram range must cover [0, 1]");
        }
        let (nlo, nhi) = self.norm_ratio_range;
        if !(nlo.is_finite() && nhi.is_finite() && nlo < nhi) {
            return bad("norm ratio range must be a finite, non-empty interval");
        }
        for (name, v) in [
            ("middle_tolerance", self.middle_tolerance),
            ("theta_d", self.theta_d),
            ("theta_u1", self.theta_u1),
            ("theta_u2", self.theta_u2),
            ("norm_ratio_band", self.norm_ratio_band),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CriteriaError::InvalidConfig(format!(
                    "{name} must be positive"
                )));
            }
        }
        if let Some((lo, hi)) = self.epsilon_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad("epsilon range needs finite lo <= hi");
            }
        }
        Ok(())
    }

    fn grid_for(&self, diffs: &[f64]) -> Result<EpsilonGrid> {
        match self.epsilon_range {
            Some((lo, hi)) => EpsilonGrid::new(lo, hi, self.epsilon_count),
            None => EpsilonGrid::derive(diffs, self.epsilon_count),
        }
    }
}

/// Evenly spaced margins, both endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonGrid {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

impl EpsilonGrid {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(CriteriaError::InvalidGrid("count must be positive".into()));
        }
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(CriteriaError::InvalidGrid(format!(
                "bad range [{lo}, {hi}]"
            )));
        }
        if count == 1 && lo != hi {
            return Err(CriteriaError::InvalidGrid(
                "a single grid value requires lo == hi".into(),
            ));
        }
        let values = (0..count)
            .map(|i| {
                if i + 1 == count {
                    hi
                } else {
                    (lo + (hi - lo) * i as f64 / (count - 1) as f64).min(hi)
                }
            })
            .collect();
        Ok(Self { lo, hi, values })
    }

    /// Grid over the empirical `[min, max]` of `diffs`.
    pub fn derive(diffs: &[f64], count: usize) -> Result<Self> {
        if diffs.is_empty() {
            return Err(CriteriaError::EmptyInput);
        }
        if diffs.iter().any(|d| !d.is_finite()) {
            return Err(CriteriaError::InvalidGrid("non-finite difference".into()));
        }
        let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo, hi, count)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of grid values `ε` with `d >= ε`.
    pub fn satisfied_by(&self, d: f64) -> u64 {
        self.values.partition_point(|&e| e <= d) as u64
    }
}

pub fn derive_grid(diffs: &[f64], count: usize) -> Result<EpsilonGrid> {
    EpsilonGrid::derive(diffs, count)
}

/// Embeddings of one (inputs, target) sample.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddedSample<'a> {
    pub a: &'a Embedding,
    pub b: &'a Embedding,
    pub target: &'a Embedding,
}

impl<'a> EmbeddedSample<'a> {
    pub fn new(a: &'a Embedding, b: &'a Embedding, target: &'a Embedding) -> Self {
        Self { a, b, target }
    }

    pub fn swapped(&self) -> Self {
        Self {
            a: self.b,
            b: self.a,
            target: self.target,
        }
    }
}

/// Integer counts over (sample, grid point) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TallyCells {
    Pair { tt: u64, tf: u64, ft: u64, ff: u64 },
    Single { t: u64, f: u64 },
}

/// Grid-averaged satisfaction of one or two margin conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTally {
    pub cells: TallyCells,
    pub n_samples: usize,
    pub grids: Vec<EpsilonGrid>,
}

impl ConditionTally {
    pub fn n_grid_points(&self) -> u64 {
        self.grids.iter().map(|g| g.count() as u64).product()
    }

    fn percent(&self, count: u64) -> f64 {
        let denom = self.n_samples as u64 * self.n_grid_points();
        if denom == 0 {
            return 0.0;
        }
        100.0 * count as f64 / denom as f64
    }

    /// Cell percentages in table order: `tt, tf, ft, ff` or `t, f`.
    pub fn percentages(&self) -> Vec<f64> {
        match self.cells {
            TallyCells::Pair { tt, tf, ft, ff } => {
                [tt, tf, ft, ff].iter().map(|&c| self.percent(c)).collect()
            }
            TallyCells::Single { t, f } => [t, f].iter().map(|&c| self.percent(c)).collect(),
        }
    }

    pub fn cell_names(&self) -> &'static [&'static str] {
        match self.cells {
            TallyCells::Pair { .. } => &["tt", "tf", "ft", "ff"],
            TallyCells::Single { .. } => &["t", "f"],
        }
    }

    /// Percentage with every condition satisfied.
    pub fn satisfied_percent(&self) -> f64 {
        self.percentages()[0]
    }
}

/// Per-sample values in input order; the first failing sample is reported.
fn per_sample<F>(samples: &[EmbeddedSample<'_>], f: F) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&EmbeddedSample<'_>) -> std::result::Result<(f64, f64), GeometryError> + Sync,
{
    let out: Vec<_> = samples.par_iter().map(&f).collect();
    out.into_iter()
        .enumerate()
        .map(|(sample, r)| r.map_err(|source| CriteriaError::Geometry { sample, source }))
        .collect()
}

fn pair_tally(d1: &[f64], d2: &[f64], cfg: &CriteriaConfig) -> Result<ConditionTally> {
    let g1 = cfg.grid_for(d1)?;
    let g2 = cfg.grid_for(d2)?;
    let (n1, n2) = (g1.count() as u64, g2.count() as u64);
    let (tt, tf, ft, ff) = d1
        .par_iter()
        .zip(d2.par_iter())
        .map(|(&x, &y)| {
            let (k1, k2) = (g1.satisfied_by(x), g2.satisfied_by(y));
            (
                k1 * k2,
                k1 * (n2 - k2),
                (n1 - k1) * k2,
                (n1 - k1) * (n2 - k2),
            )
        })
        .reduce(
            || (0, 0, 0, 0),
            |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3),
        );
    Ok(ConditionTally {
        cells: TallyCells::Pair { tt, tf, ft, ff },
        n_samples: d1.len(),
        grids: vec![g1, g2],
    })
}

/// Overlap margins: `S(A,O) − S(A,B) ≥ ε₁` and `S(B,O) − S(A,B) ≥ ε₂`.
pub fn eval_c1(
    samples: &[EmbeddedSample<'_>],
    kind: MeasureKind,
    cfg: &CriteriaConfig,
) -> Result<ConditionTally> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(CriteriaError::EmptyInput);
    }
    let diffs = per_sample(samples, |s| {
        let ab = oriented_similarity(kind, s.a, s.b)?;
        let ao = oriented_similarity(kind, s.a, s.target)?;
        let bo = oriented_similarity(kind, s.b, s.target)?;
        Ok((ao - ab, bo - ab))
    })?;
    let (d1, d2): (Vec<f64>, Vec<f64>) = diffs.into_iter().unzip();
    pair_tally(&d1, &d2, cfg)
}

/// Difference margins: `S(A,D) − S(B,D) ≥ ε₁` and `S(A,B) − S(B,D) ≥ ε₂`.
pub fn eval_c3(
    samples: &[EmbeddedSample<'_>],
    kind: MeasureKind,
    cfg: &CriteriaConfig,
) -> Result<ConditionTally> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(CriteriaError::EmptyInput);
    }
    let diffs = per_sample(samples, |s| {
        let ad = oriented_similarity(kind, s.a, s.target)?;
        let bd = oriented_similarity(kind, s.b, s.target)?;
        let ab = oriented_similarity(kind, s.a, s.b)?;
        Ok((ad - bd, ab - bd))
    })?;
    let (d1, d2): (Vec<f64>, Vec<f64>) = diffs.into_iter().unzip();
    pair_tally(&d1, &d2, cfg)
}

/// Algebraic difference: `S(E_A − E_B, E_D) − S(E_A − E_B, E_B) ≥ ε`.
///
/// Only cosine and NED are accepted.
pub fn eval_c4(
    samples: &[EmbeddedSample<'_>],
    kind: MeasureKind,
    cfg: &CriteriaConfig,
) -> Result<ConditionTally> {
    if !matches!(kind, MeasureKind::Cosine | MeasureKind::Ned) {
        return Err(CriteriaError::UnsupportedMeasure(kind));
    }
    cfg.validate()?;
    if samples.is_empty() {
        return Err(CriteriaError::EmptyInput);
    }
    let diffs = per_sample(samples, |s| {
        let delta = s.a.sub(s.b)?;
        if delta.norm() <= 1e-12 * s.a.norm().max(s.b.norm()) {
            return Err(GeometryError::DegenerateVector(
                "inputs are identical; E_A - E_B vanishes",
            ));
        }
        let dd = oriented_similarity(kind, &delta, s.target)?;
        let db = oriented_similarity(kind, &delta, s.b)?;
        Ok((dd - db, 0.0))
    })?;
    let d: Vec<f64> = diffs.into_iter().map(|(d, _)| d).collect();
    let grid = cfg.grid_for(&d)?;
    let n = grid.count() as u64;
    let t: u64 = d.par_iter().map(|&x| grid.satisfied_by(x)).sum();
    let f = n * d.len() as u64 - t;
    Ok(ConditionTally {
        cells: TallyCells::Single { t, f },
        n_samples: d.len(),
        grids: vec![grid],
    })
}

/// Fixed-width histogram with explicit out-of-range counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        assert!(bins > 0 && lo < hi, "histogram needs bins > 0 and lo < hi");
        Self {
            lo,
            hi,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn add(&mut self, x: f64) {
        let bins = self.counts.len();
        if x < self.lo {
            self.underflow += 1;
        } else if x > self.hi {
            self.overflow += 1;
        } else {
            let idx = ((x - self.lo) * bins as f64 / (self.hi - self.lo)).floor() as usize;
            self.counts[idx.min(bins - 1)] += 1;
        }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// `(left, right)` edges of bin `i`.
    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.bins() as f64;
        let right = if i + 1 == self.bins() {
            self.hi
        } else {
            self.lo + w * (i + 1) as f64
        };
        (self.lo + w * i as f64, right)
    }

    /// In-range plus out-of-range observations.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

/// Which of the three expected-outcome diagrams a criterion reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetRole {
    Overlap,
    Difference,
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Middle,
    BeyondA,
    BeyondB,
    /// Inside the cone of `−E_A` and `−E_B`.
    Opposite,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleRecord {
    pub sample: usize,
    pub angles: Option<AnglePair>,
    pub classification: Classification,
    /// `‖E_A‖ / ‖E_B‖`.
    pub norm_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleProfile {
    pub records: Vec<AngleRecord>,
    /// Signed position from `E_B` (0) toward `E_A` (1); equals `t_b` except
    /// beyond `E_B`, where it is negative.
    pub histogram: Histogram,
    /// Samples whose inputs were parallel.
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub middle: u64,
    pub beyond_a: u64,
    pub beyond_b: u64,
    pub opposite: u64,
    pub degenerate: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.middle + self.beyond_a + self.beyond_b + self.opposite + self.degenerate
    }

    fn bump(&mut self, c: Classification) {
        match c {
            Classification::Middle => self.middle += 1,
            Classification::BeyondA => self.beyond_a += 1,
            Classification::BeyondB => self.beyond_b += 1,
            Classification::Opposite => self.opposite += 1,
            Classification::Degenerate => self.degenerate += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormBucket {
    /// `‖E_A‖ / ‖E_B‖ > 1 + band`: projection expected near `E_A`.
    ADominant,
    /// `‖E_A‖ / ‖E_B‖ < 1 − band`: projection expected near `E_B`.
    BDominant,
    /// Comparable norms: projection expected in the middle.
    Comparable,
}

impl NormBucket {
    pub fn of(ratio: f64, band: f64) -> Self {
        if ratio > 1.0 + band {
            NormBucket::ADominant
        } else if ratio < 1.0 - band {
            NormBucket::BDominant
        } else {
            NormBucket::Comparable
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketOutcome {
    pub n: u64,
    pub expected: u64,
    pub fraction: Option<f64>,
}

/// The three norm-ratio cases of the union criterion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UnionCases {
    pub a_dominant: BucketOutcome,
    pub b_dominant: BucketOutcome,
    pub comparable: BucketOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    pub role: TargetRole,
    pub n_samples: usize,
    pub n_skipped: usize,
    pub counts: ClassCounts,
    pub middle_fraction: Option<f64>,
    pub beyond_a_fraction: Option<f64>,
    pub beyond_b_fraction: Option<f64>,
    pub opposite_fraction: Option<f64>,
    pub degenerate_fraction: Option<f64>,
    /// Samples with `t_a < theta_d`.
    pub near_a: u64,
    pub near_a_fraction: Option<f64>,
    pub union_cases: Option<UnionCases>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub profile: AngleProfile,
    pub summary: ProjectionSummary,
}

fn classify(angles: &AnglePair, tolerance: f64) -> Classification {
    if (angles.t_a + angles.t_b - 1.0).abs() <= tolerance {
        return Classification::Middle;
    }
    match angles.region() {
        PlaneRegion::BeyondA => Classification::BeyondA,
        PlaneRegion::BeyondB => Classification::BeyondB,
        PlaneRegion::Opposite => Classification::Opposite,
        // inside [0, span] the angle sum is 1 up to rounding
        PlaneRegion::Between => Classification::Middle,
    }
}

fn fraction(n: u64, d: u64) -> Option<f64> {
    (d > 0).then(|| n as f64 / d as f64)
}

/// Projects each target onto the plane of its inputs and classifies where
/// it lands (C2 for overlap, C5 for difference, C6 for union).
pub fn eval_projection_criterion(
    samples: &[EmbeddedSample<'_>],
    role: TargetRole,
    cfg: &CriteriaConfig,
) -> Result<ProjectionReport> {
    cfg.validate()?;
    let per: Vec<std::result::Result<Option<AngleRecord>, CriteriaError>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let geo = |source| CriteriaError::Geometry { sample: i, source };
            let basis = match plane_basis(s.a, s.b) {
                Ok(b) => b,
                Err(GeometryError::ParallelInputs) => return Ok(None),
                Err(e) => return Err(geo(e)),
            };
            let norm_ratio = basis.source_x_norm() / basis.source_y_norm();
            let (angles, classification) = match project_angles(s.target, &basis, s.a, s.b) {
                Ok(a) => (Some(a), classify(&a, cfg.middle_tolerance)),
                Err(GeometryError::DegenerateProjection) => (None, Classification::Degenerate),
                Err(e) => return Err(geo(e)),
            };
            Ok(Some(AngleRecord {
                sample: i,
                angles,
                classification,
                norm_ratio,
            }))
        })
        .collect();

    let (lo, hi) = cfg.histogram_range;
    let mut histogram = Histogram::new(lo, hi, cfg.histogram_bins);
    let mut records = Vec::with_capacity(samples.len());
    let mut skipped = Vec::new();
    let mut counts = ClassCounts::default();
    let mut near_a = 0u64;
    let mut cases = UnionCases::default();
    for (i, r) in per.into_iter().enumerate() {
        let Some(rec) = r? else {
            skipped.push(i);
            continue;
        };
        counts.bump(rec.classification);
        if let Some(a) = rec.angles {
            histogram.add(a.signed_t_b());
            if a.t_a < cfg.theta_d {
                near_a += 1;
            }
        }
        let (bucket, met) = match NormBucket::of(rec.norm_ratio, cfg.norm_ratio_band) {
            NormBucket::ADominant => (
                &mut cases.a_dominant,
                rec.angles.is_some_and(|a| a.t_a < cfg.theta_u1),
            ),
            NormBucket::BDominant => (
                &mut cases.b_dominant,
                rec.angles.is_some_and(|a| a.t_b < cfg.theta_u1),
            ),
            NormBucket::Comparable => (
                &mut cases.comparable,
                rec.classification == Classification::Middle,
            ),
        };
        bucket.n += 1;
        bucket.expected += u64::from(met);
        records.push(rec);
    }
    for b in [
        &mut cases.a_dominant,
        &mut cases.b_dominant,
        &mut cases.comparable,
    ] {
        b.fraction = fraction(b.expected, b.n);
    }

    if !skipped.is_empty() {
        log::warn!(
            "{:?} projection: {} of {} samples skipped (parallel inputs)",
            role,
            skipped.len(),
            samples.len()
        );
    }
    let n = counts.total();
    let summary = ProjectionSummary {
        role,
        n_samples: samples.len(),
        n_skipped: skipped.len(),
        counts,
        middle_fraction: fraction(counts.middle, n),
        beyond_a_fraction: fraction(counts.beyond_a, n),
        beyond_b_fraction: fraction(counts.beyond_b, n),
        opposite_fraction: fraction(counts.opposite, n),
        degenerate_fraction: fraction(counts.degenerate, n),
        near_a,
        near_a_fraction: fraction(near_a, n),
        union_cases: (role == TargetRole::Union).then_some(cases),
    };
    Ok(ProjectionReport {
        profile: AngleProfile {
            records,
            histogram,
            skipped,
        },
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRatioProfile {
    pub ratios: Vec<f64>,
    pub histogram: Histogram,
    pub median: f64,
    pub within_band: u64,
    pub within_band_fraction: f64,
    pub band: f64,
}

/// Distribution of `‖E_A‖ / ‖E_B‖` over samples.
pub fn norm_ratio_profile(
    samples: &[EmbeddedSample<'_>],
    cfg: &CriteriaConfig,
) -> Result<NormRatioProfile> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(CriteriaError::EmptyInput);
    }
    let mut ratios = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let nb = s.b.norm();
        if nb == 0.0 {
            return Err(CriteriaError::Geometry {
                sample: i,
                source: GeometryError::DegenerateVector("E_B is the zero vector"),
            });
        }
        ratios.push(s.a.norm() / nb);
    }
    let (lo, hi) = cfg.norm_ratio_range;
    let mut histogram = Histogram::new(lo, hi, cfg.histogram_bins);
    ratios.iter().for_each(|&r| histogram.add(r));
    let within_band = ratios
        .iter()
        .filter(|&&r| NormBucket::of(r, cfg.norm_ratio_band) == NormBucket::Comparable)
        .count() as u64;
    Ok(NormRatioProfile {
        median: median(&ratios),
        within_band,
        within_band_fraction: within_band as f64 / ratios.len() as f64,
        band: cfg.norm_ratio_band,
        histogram,
        ratios,
    })
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
