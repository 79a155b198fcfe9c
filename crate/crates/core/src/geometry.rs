//! Vector mathematics for embedding comparison.
//!
//! Five comparison measures (cosine, dot, L1, L2, normalized Euclidean
//! distance) and the two-dimensional plane machinery used by the projection
//! criteria: an orthonormal basis for the plane spanned by two input
//! embeddings, orthogonal projection onto it, and in-plane angles normalized
//! so that the angle between the two inputs is 1.
//!
//! Everything is computed in `f64`, regardless of how vectors were stored.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative residual below which two inputs are treated as collinear.
pub const PARALLEL_TOLERANCE: f64 = 1e-8;

/// Relative magnitude below which a projection is treated as vanishing.
pub const DEGENERATE_PROJECTION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("degenerate vector: {0}")]
    DegenerateVector(&'static str),
    #[error("inputs are parallel; the plane they span is undefined")]
    ParallelInputs,
    #[error("projection onto the plane vanishes")]
    DegenerateProjection,
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// A finite real vector of dimension at least 2.
///
/// Not required to be unit norm; norms matter for the dot product and for
/// the union norm-ratio analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(GeometryError::InvalidEmbedding(format!(
                "dimension must be at least 2, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidEmbedding(format!(
                "non-finite entry at index {i}"
            )));
        }
        Ok(Self(values))
    }

    /// Widens stored 32-bit values.
    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Elementwise `self - other`. May produce the zero vector.
    pub fn sub(&self, other: &Embedding) -> Result<Embedding> {
        check_dims(self, other)?;
        Ok(Embedding(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scaled(&self, s: f64) -> Embedding {
        Embedding(self.0.iter().map(|v| v * s).collect())
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Whether larger values mean "closer" or "farther".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Similarity,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Cosine,
    Dot,
    L1,
    L2,
    Ned,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 5] = [
        MeasureKind::Cosine,
        MeasureKind::Dot,
        MeasureKind::L1,
        MeasureKind::L2,
        MeasureKind::Ned,
    ];

    pub fn polarity(self) -> Polarity {
        match self {
            MeasureKind::Cosine | MeasureKind::Dot => Polarity::Similarity,
            MeasureKind::L1 | MeasureKind::L2 | MeasureKind::Ned => Polarity::Distance,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Cosine => "cosine",
            MeasureKind::Dot => "dot",
            MeasureKind::L1 => "l1",
            MeasureKind::L2 => "l2",
            MeasureKind::Ned => "ned",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cosine" | "cos" => Ok(MeasureKind::Cosine),
            "dot" => Ok(MeasureKind::Dot),
            "l1" => Ok(MeasureKind::L1),
            "l2" => Ok(MeasureKind::L2),
            "ned" => Ok(MeasureKind::Ned),
            other => Err(format!("unknown measure `{other}`")),
        }
    }
}

fn check_dims(x: &Embedding, y: &Embedding) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(GeometryError::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    Ok(())
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

/// Raw value of `kind` between `x` and `y`, in the measure's own polarity.
///
/// NED is `½‖x̃ − ỹ‖² / (‖x̃‖² + ‖ỹ‖²)` where `x̃` is `x` minus its mean.
pub fn measure(kind: MeasureKind, x: &Embedding, y: &Embedding) -> Result<f64> {
    check_dims(x, y)?;
    let (xs, ys) = (x.as_slice(), y.as_slice());
    match kind {
        MeasureKind::Cosine => {
            let (nx, ny) = (norm(xs), norm(ys));
            if nx == 0.0 || ny == 0.0 {
                return Err(GeometryError::DegenerateVector(
                    "zero vector has no direction",
                ));
            }
            Ok((dot(xs, ys) / (nx * ny)).clamp(-1.0, 1.0))
        }
        MeasureKind::Dot => Ok(dot(xs, ys)),
        MeasureKind::L1 => Ok(xs.iter().zip(ys).map(|(a, b)| (a - b).abs()).sum()),
        MeasureKind::L2 => Ok(xs
            .iter()
            .zip(ys)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()),
        MeasureKind::Ned => {
            let (xc, yc) = (centered(xs), centered(ys));
            let (sx, sy) = (dot(&xc, &xc), dot(&yc, &yc));
            // constant vectors center to (numerically) zero
            if sx <= 1e-24 * dot(xs, xs) || sy <= 1e-24 * dot(ys, ys) {
                return Err(GeometryError::DegenerateVector(
                    "constant vector vanishes after mean-centering",
                ));
            }
            let diff: f64 = xc.iter().zip(&yc).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok((0.5 * diff / (sx + sy)).clamp(0.0, 1.0))
        }
    }
}

/// `measure` oriented so that larger always means closer.
///
/// Distances are negated here and nowhere else.
pub fn oriented_similarity(kind: MeasureKind, x: &Embedding, y: &Embedding) -> Result<f64> {
    let v = measure(kind, x, y)?;
    Ok(match kind.polarity() {
        Polarity::Similarity => v,
        Polarity::Distance => -v,
    })
}

/// Angle in `[0, π]` as the arccosine of the clamped cosine.
pub fn angle_between(x: &Embedding, y: &Embedding) -> Result<f64> {
    Ok(measure(MeasureKind::Cosine, x, y)?.acos())
}

/// Orthonormal basis of the plane spanned by two vectors.
///
/// `b1` is `x` normalized; `b2` is the normalized Gram–Schmidt residual of
/// `y` against `b1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneBasis {
    b1: Vec<f64>,
    b2: Vec<f64>,
    source_x_norm: f64,
    source_y_norm: f64,
}

impl PlaneBasis {
    pub fn new(x: &Embedding, y: &Embedding) -> Result<Self> {
        check_dims(x, y)?;
        let (nx, ny) = (x.norm(), y.norm());
        if nx == 0.0 || ny == 0.0 {
            return Err(GeometryError::DegenerateVector(
                "zero vector spans no plane",
            ));
        }
        let b1: Vec<f64> = x.as_slice().iter().map(|v| v / nx).collect();
        let mut b2: Vec<f64> = y.as_slice().to_vec();
        // second pass restores orthogonality lost to cancellation
        for _ in 0..2 {
            let c = dot(&b2, &b1);
            b2.iter_mut().zip(&b1).for_each(|(r, u)| *r -= c * u);
        }
        let residual = norm(&b2);
        if residual <= PARALLEL_TOLERANCE * ny {
            return Err(GeometryError::ParallelInputs);
        }
        b2.iter_mut().for_each(|r| *r /= residual);
        Ok(Self {
            b1,
            b2,
            source_x_norm: nx,
            source_y_norm: ny,
        })
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn b2(&self) -> &[f64] {
        &self.b2
    }

    pub fn dim(&self) -> usize {
        self.b1.len()
    }

    pub fn source_x_norm(&self) -> f64 {
        self.source_x_norm
    }

    pub fn source_y_norm(&self) -> f64 {
        self.source_y_norm
    }

    /// Coordinates of `v` along `(b1, b2)`.
    pub fn coordinates(&self, v: &[f64]) -> (f64, f64) {
        (dot(v, &self.b1), dot(v, &self.b2))
    }

    /// Orthogonal projection `(v·b1)b1 + (v·b2)b2`.
    pub fn project(&self, v: &Embedding) -> Result<Embedding> {
        if v.dim() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                left: v.dim(),
                right: self.dim(),
            });
        }
        let (c1, c2) = self.coordinates(v.as_slice());
        Ok(Embedding(
            self.b1
                .iter()
                .zip(&self.b2)
                .map(|(u1, u2)| c1 * u1 + c2 * u2)
                .collect(),
        ))
    }
}

pub fn plane_basis(x: &Embedding, y: &Embedding) -> Result<PlaneBasis> {
    PlaneBasis::new(x, y)
}

pub fn project(v: &Embedding, basis: &PlaneBasis) -> Result<Embedding> {
    basis.project(v)
}

/// Normalized in-plane angles of a projected vector relative to two inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnglePair {
    /// ∠(x, v) / ∠(x, y).
    pub t_a: f64,
    /// ∠(y, v) / ∠(x, y).
    pub t_b: f64,
    /// Angle of `v` from `b1`, counter-clockwise toward `y`, in `(−π, π]`.
    pub signed_theta: f64,
    /// ∠(x, y) in `(0, π)`.
    pub span: f64,
}

impl AnglePair {
    /// Position measured from `y` toward `x` in normalized units: 0 at `y`,
    /// 1 at `x`, negative beyond `y`, above 1 beyond `x`.
    pub fn signed_t_b(&self) -> f64 {
        (self.span - self.signed_theta) / self.span
    }

    pub fn region(&self) -> PlaneRegion {
        let theta = self.signed_theta;
        if theta >= 0.0 && theta <= self.span {
            PlaneRegion::Between
        } else if theta > self.span {
            PlaneRegion::BeyondB
        } else if theta >= self.span - PI {
            PlaneRegion::BeyondA
        } else {
            PlaneRegion::Opposite
        }
    }
}

/// Where a direction falls in the plane relative to the cone of `x`, `y`.
///
/// `Opposite` is the cone spanned by `−x` and `−y`, where neither
/// `t_a + t_b = 1` nor `|t_a − t_b| = 1` holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneRegion {
    Between,
    BeyondA,
    BeyondB,
    Opposite,
}

/// Normalized angles of `v_proj` against `x` and `y`.
///
/// Angles are read off the plane coordinates with `atan2`, which keeps full
/// precision near 0 and π where `acos` loses about half the digits.
pub fn normalized_angles(
    v_proj: &Embedding,
    basis: &PlaneBasis,
    x: &Embedding,
    y: &Embedding,
) -> Result<AnglePair> {
    for other in [x, y] {
        if other.dim() != basis.dim() {
            return Err(GeometryError::DimensionMismatch {
                left: other.dim(),
                right: basis.dim(),
            });
        }
    }
    if v_proj.dim() != basis.dim() {
        return Err(GeometryError::DimensionMismatch {
            left: v_proj.dim(),
            right: basis.dim(),
        });
    }
    let (v1, v2) = basis.coordinates(v_proj.as_slice());
    if v1.hypot(v2) == 0.0 {
        return Err(GeometryError::DegenerateProjection);
    }
    let (x1, x2) = basis.coordinates(x.as_slice());
    let (y1, y2) = basis.coordinates(y.as_slice());
    let x_dir = x2.atan2(x1);
    let span = wrap(y2.atan2(y1) - x_dir).abs();
    if !(span > 0.0 && span < PI) {
        return Err(GeometryError::ParallelInputs);
    }
    // orient so that y sits at +span
    let orient = if wrap(y2.atan2(y1) - x_dir) >= 0.0 {
        1.0
    } else {
        -1.0
    };
    let signed_theta = orient * wrap(v2.atan2(v1) - x_dir);
    let to_a = signed_theta.abs();
    let to_b = wrap(signed_theta - span).abs();
    Ok(AnglePair {
        t_a: to_a / span,
        t_b: to_b / span,
        signed_theta,
        span,
    })
}

/// Projects `v` and computes its normalized angles, flagging projections
/// that vanish relative to `‖v‖`.
pub fn project_angles(
    v: &Embedding,
    basis: &PlaneBasis,
    x: &Embedding,
    y: &Embedding,
) -> Result<AnglePair> {
    let v_proj = basis.project(v)?;
    let vn = v.norm();
    if vn == 0.0 || v_proj.norm() < DEGENERATE_PROJECTION_TOLERANCE * vn {
        return Err(GeometryError::DegenerateProjection);
    }
    normalized_angles(&v_proj, basis, x, y)
}

/// Wraps an angle difference into `(−π, π]`.
fn wrap(mut a: f64) -> f64 {
    while a <= -PI {
        a += 2.0 * PI;
    }
    while a > PI {
        a -= 2.0 * PI;
    }
    a
}
