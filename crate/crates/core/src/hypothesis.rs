//! One-dimensional classifiers and the nested classes they live in.
//!
//! A [`BoundaryHypothesis`] is a sorted list of decision boundaries plus the
//! label of the leftmost interval. Level `k` of the boundary hierarchy holds
//! every hypothesis with at most `k` boundaries, which is also the class of
//! two-layer threshold networks with `k` hidden units.

use std::fmt;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary label, serialized as `-1` / `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_sign(s: f64) -> Label {
        if s < 0.0 {
            Label::Negative
        } else {
            Label::Positive
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Negative => -1,
            Label::Positive => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.as_i8() as f64
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }

    /// Product of two signs.
    pub fn times(self, other: Label) -> Label {
        if self == other {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, Self::Error> {
        match v {
            -1 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(format!("label must be -1 or +1, got {other}")),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        l.as_i8()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Negative => "-1",
            Label::Positive => "+1",
        })
    }
}

/// Piecewise-constant classifier on the real line.
///
/// ```
/// use model_transfer::hypothesis::{BoundaryHypothesis, Label};
///
/// let h = BoundaryHypothesis::new(vec![1.0 / 9.0, 1.0 / 3.0], Label::Negative).unwrap();
/// assert_eq!(h.evaluate(0.2), Label::Positive);
/// assert_eq!(h.evaluate(0.5), Label::Negative);
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBoundary")]
pub struct BoundaryHypothesis {
    boundaries: Vec<f64>,
    first_sign: Label,
}

#[derive(Deserialize)]
struct RawBoundary {
    boundaries: Vec<f64>,
    first_sign: Label,
}

impl TryFrom<RawBoundary> for BoundaryHypothesis {
    type Error = Error;

    fn try_from(raw: RawBoundary) -> Result<Self> {
        BoundaryHypothesis::new(raw.boundaries, raw.first_sign)
    }
}

impl BoundaryHypothesis {
    pub fn new(boundaries: Vec<f64>, first_sign: Label) -> Result<Self> {
        if boundaries.iter().any(|b| !b.is_finite())
            || boundaries.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidBoundaries);
        }
        Ok(BoundaryHypothesis {
            boundaries,
            first_sign,
        })
    }

    pub fn constant(label: Label) -> Self {
        BoundaryHypothesis {
            boundaries: Vec::new(),
            first_sign: label,
        }
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn first_sign(&self) -> Label {
        self.first_sign
    }

    pub fn boundary_count(&self) -> usize {
        self.boundaries.len()
    }

    /// Label at `x`. A point sitting on a boundary gets the label of the
    /// interval to its left.
    pub fn evaluate(&self, x: f64) -> Label {
        let crossed = self.boundaries.partition_point(|&b| b < x);
        self.sign_of_interval(crossed)
    }

    /// Label of the `j`-th constant interval, counting from the left.
    pub fn sign_of_interval(&self, j: usize) -> Label {
        if j.is_multiple_of(2) {
            self.first_sign
        } else {
            self.first_sign.flip()
        }
    }

    /// The maximal intervals on which the hypothesis is constant, as
    /// `(lo, hi, label)` with infinite outer ends.
    pub fn intervals(&self) -> Vec<(f64, f64, Label)> {
        let mut edges = Vec::with_capacity(self.boundaries.len() + 2);
        edges.push(f64::NEG_INFINITY);
        edges.extend_from_slice(&self.boundaries);
        edges.push(f64::INFINITY);
        edges
            .windows(2)
            .enumerate()
            .map(|(j, w)| (w[0], w[1], self.sign_of_interval(j)))
            .collect()
    }
}

impl fmt::Display for BoundaryHypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.first_sign)?;
        for (i, b) in self.boundaries.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{b:.6}")?;
        }
        f.write_str("]")
    }
}

/// A classifier defined only on a finite set of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularHypothesis {
    support: Vec<f64>,
    labels: Vec<Label>,
}

impl TabularHypothesis {
    pub fn new(support: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        if support.len() != labels.len() {
            return Err(Error::LengthMismatch {
                points: support.len(),
                labels: labels.len(),
            });
        }
        let mut seen = support.clone();
        seen.sort_by(f64::total_cmp);
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::UnsortedPoints);
        }
        Ok(TabularHypothesis { support, labels })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn evaluate(&self, x: f64) -> Result<Label> {
        self.support
            .iter()
            .position(|&s| s == x)
            .map(|i| self.labels[i])
            .ok_or(Error::OffSupport(x))
    }
}

/// Either kind of classifier the library works with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hypothesis {
    Boundary(BoundaryHypothesis),
    Tabular(TabularHypothesis),
}

impl Hypothesis {
    pub fn evaluate(&self, x: f64) -> Result<Label> {
        match self {
            Hypothesis::Boundary(h) => Ok(h.evaluate(x)),
            Hypothesis::Tabular(h) => h.evaluate(x),
        }
    }

    pub fn as_boundary(&self) -> Option<&BoundaryHypothesis> {
        match self {
            Hypothesis::Boundary(h) => Some(h),
            Hypothesis::Tabular(_) => None,
        }
    }

    /// Number of boundaries, or the number of label changes along the
    /// sorted support for tabular hypotheses.
    pub fn complexity(&self) -> usize {
        match self {
            Hypothesis::Boundary(h) => h.boundary_count(),
            Hypothesis::Tabular(h) => {
                let mut order: Vec<usize> = (0..h.support.len()).collect();
                order.sort_by(|&a, &b| h.support[a].total_cmp(&h.support[b]));
                order
                    .windows(2)
                    .filter(|w| h.labels[w[0]] != h.labels[w[1]])
                    .count()
            }
        }
    }
}

impl From<BoundaryHypothesis> for Hypothesis {
    fn from(h: BoundaryHypothesis) -> Self {
        Hypothesis::Boundary(h)
    }
}

impl From<TabularHypothesis> for Hypothesis {
    fn from(h: TabularHypothesis) -> Self {
        Hypothesis::Tabular(h)
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::Boundary(h) => h.fmt(f),
            Hypothesis::Tabular(h) => {
                f.write_str("{")?;
                for (i, (x, y)) in h.support.iter().zip(&h.labels).enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x:.4}:{y}")?;
                }
                f.write_str("}")
            }
        }
    }
}

/// Which hypotheses make up each level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassKind {
    /// Level `k` holds every boundary hypothesis with at most `k`
    /// boundaries, optionally with the leftmost label pinned.
    Boundary { first_sign: Option<Label> },
    /// Explicit members; `members[i]` is the (cumulative) level
    /// `min_level + i`.
    Finite { members: Vec<Vec<BoundaryHypothesis>> },
    /// A single level of tabular hypotheses over `support`, with the label
    /// of `support[0]` pinned to `+1`.
    Tabular { support: Vec<f64> },
}

/// A truncated nested hierarchy `H_min ⊂ … ⊂ H_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub min_level: usize,
    pub max_level: usize,
    /// VC dimension per level, starting at `min_level`.
    pub vc_dims: Vec<usize>,
    pub class: ClassKind,
}

impl HierarchySpec {
    /// Full boundary hierarchy: levels `0..=max_level`, `d_k = k + 1`.
    pub fn boundary(max_level: usize) -> Self {
        HierarchySpec {
            min_level: 0,
            max_level,
            vc_dims: (0..=max_level).map(vc_dimension).collect(),
            class: ClassKind::Boundary { first_sign: None },
        }
    }

    /// Boundary hierarchy starting at level `min_level`.
    pub fn boundary_from(min_level: usize, max_level: usize) -> Self {
        HierarchySpec {
            min_level,
            max_level,
            vc_dims: (min_level..=max_level).map(vc_dimension).collect(),
            class: ClassKind::Boundary { first_sign: None },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_level < self.min_level {
            return Err(Error::InvalidParameter(
                "max_level below min_level".into(),
            ));
        }
        if self.vc_dims.len() != self.max_level - self.min_level + 1 {
            return Err(Error::InvalidParameter(format!(
                "expected {} vc dimensions, got {}",
                self.max_level - self.min_level + 1,
                self.vc_dims.len()
            )));
        }
        if self.vc_dims.contains(&0) || self.vc_dims.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::InvalidParameter(
                "vc dimensions must be positive and nondecreasing".into(),
            ));
        }
        match &self.class {
            ClassKind::Finite { members } => {
                if members.len() != self.vc_dims.len() || members.iter().any(|m| m.is_empty()) {
                    return Err(Error::InvalidParameter(
                        "finite class needs a nonempty member list per level".into(),
                    ));
                }
            }
            ClassKind::Tabular { support } => {
                if self.min_level != self.max_level || support.is_empty() {
                    return Err(Error::InvalidParameter(
                        "tabular class has exactly one level over a nonempty support".into(),
                    ));
                }
            }
            ClassKind::Boundary { .. } => {}
        }
        Ok(())
    }

    pub fn check_level(&self, level: usize) -> Result<()> {
        if level < self.min_level || level > self.max_level {
            Err(Error::LevelOutOfRange {
                level,
                min: self.min_level,
                max: self.max_level,
            })
        } else {
            Ok(())
        }
    }

    pub fn vc_dimension(&self, level: usize) -> Result<usize> {
        self.check_level(level)?;
        Ok(self.vc_dims[level - self.min_level])
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<usize> {
        self.min_level..=self.max_level
    }

    /// Same hierarchy cut off at `max_level`.
    pub fn truncated(&self, max_level: usize) -> Result<Self> {
        self.check_level(max_level)?;
        let keep = max_level - self.min_level + 1;
        let class = match &self.class {
            ClassKind::Finite { members } => ClassKind::Finite {
                members: members[..keep].to_vec(),
            },
            other => other.clone(),
        };
        Ok(HierarchySpec {
            min_level: self.min_level,
            max_level,
            vc_dims: self.vc_dims[..keep].to_vec(),
            class,
        })
    }

    /// Whether `h` belongs to level `level`.
    pub fn contains(&self, h: &Hypothesis, level: usize) -> bool {
        if self.check_level(level).is_err() {
            return false;
        }
        match (&self.class, h) {
            (ClassKind::Boundary { first_sign }, Hypothesis::Boundary(b)) => {
                b.boundary_count() <= level && first_sign.is_none_or(|s| b.first_sign() == s)
            }
            (ClassKind::Finite { members }, Hypothesis::Boundary(b)) => {
                members[level - self.min_level].contains(b)
            }
            (ClassKind::Tabular { support }, Hypothesis::Tabular(t)) => {
                t.support() == support.as_slice() && t.labels()[0] == Label::Positive
            }
            _ => false,
        }
    }
}

/// VC dimension of level `level` of the boundary hierarchy.
///
/// ```
/// assert_eq!(model_transfer::hypothesis::vc_dimension(0), 1);
/// assert_eq!(model_transfer::hypothesis::vc_dimension(1), 2);
/// ```
pub fn vc_dimension(level: usize) -> usize {
    level + 1
}

/// The hypothesis with boundaries at the midpoints where consecutive labels
/// change.
pub fn canonical_from_labels(points: &[f64], labels: &[Label]) -> Result<BoundaryHypothesis> {
    if points.is_empty() {
        return Err(Error::EmptyLabeling);
    }
    if points.len() != labels.len() {
        return Err(Error::LengthMismatch {
            points: points.len(),
            labels: labels.len(),
        });
    }
    if points.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedPoints);
    }
    let boundaries = (1..points.len())
        .filter(|&i| labels[i] != labels[i - 1])
        .map(|i| midpoint(points[i - 1], points[i]))
        .collect();
    BoundaryHypothesis::new(boundaries, labels[0])
}

pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) / 2.0
}

/// One canonical hypothesis per labeling of `points` with at most
/// `max_changes` sign changes. Duplicate points are collapsed first.
///
/// ```
/// use model_transfer::hypothesis::enumerate_hypotheses;
///
/// assert_eq!(enumerate_hypotheses(&[0.1, 0.2, 0.3], 1).count(), 6);
/// assert_eq!(enumerate_hypotheses(&[0.1, 0.2, 0.3, 0.4], 3).count(), 16);
/// ```
pub fn enumerate_hypotheses(
    points: &[f64],
    max_changes: usize,
) -> impl Iterator<Item = BoundaryHypothesis> {
    let mut pts = points.to_vec();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let gaps: Vec<f64> = pts.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    let top = max_changes.min(gaps.len());
    (0..=top).flat_map(move |j| {
        let gaps = gaps.clone();
        [Label::Positive, Label::Negative]
            .into_iter()
            .flat_map(move |sign| {
                let gaps = gaps.clone();
                (0..gaps.len())
                    .combinations(j)
                    .map(move |idx| BoundaryHypothesis {
                        boundaries: idx.iter().map(|&i| gaps[i]).collect(),
                        first_sign: sign,
                    })
            })
    })
}

/// One affine piece `slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub slope: f64,
    pub intercept: f64,
}

impl Piece {
    pub fn at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Continuous piecewise-linear function with `knots.len() + 1` pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpwlFunction {
    knots: Vec<f64>,
    pieces: Vec<Piece>,
}

impl CpwlFunction {
    pub fn new(knots: Vec<f64>, pieces: Vec<Piece>) -> Result<Self> {
        if pieces.len() != knots.len() + 1 {
            return Err(Error::InvalidCpwl(format!(
                "{} knots need {} pieces, got {}",
                knots.len(),
                knots.len() + 1,
                pieces.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidCpwl("knots must be strictly increasing".into()));
        }
        for (i, &k) in knots.iter().enumerate() {
            let (l, r) = (pieces[i].at(k), pieces[i + 1].at(k));
            if (l - r).abs() > 1e-9 * l.abs().max(r.abs()).max(1.0) {
                return Err(Error::Discontinuous { knot: k });
            }
        }
        Ok(CpwlFunction { knots, pieces })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.knots.partition_point(|&k| k < x);
        self.pieces[i].at(x)
    }
}

/// `f(x) = c0 + m0·x + Σ_i coefficients[i]·max(0, x − knots[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReluParams {
    pub c0: f64,
    pub m0: f64,
    pub knots: Vec<f64>,
    pub coefficients: Vec<f64>,
}

impl ReluParams {
    pub fn eval(&self, x: f64) -> f64 {
        self.knots
            .iter()
            .zip(&self.coefficients)
            .fold(self.c0 + self.m0 * x, |acc, (&k, &a)| {
                acc + a * (x - k).max(0.0)
            })
    }
}

/// Signed distance to the nearest boundary, with sign matching `h`.
///
/// Pieces pass through `(b_j, 0)` with slope ±1 and meet halfway between
/// consecutive boundaries.
pub fn to_cpwl(h: &BoundaryHypothesis) -> Result<CpwlFunction> {
    let b = h.boundaries();
    if b.is_empty() {
        return Err(Error::UseConstantPiece);
    }
    let knots = b.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    let pieces = b
        .iter()
        .enumerate()
        .map(|(j, &bj)| {
            let s = h.sign_of_interval(j).as_f64();
            Piece {
                slope: -s,
                intercept: s * bj,
            }
        })
        .collect();
    CpwlFunction::new(knots, pieces)
}

/// Residual-network form of a CPWL function. The hinge coefficient at each
/// knot is the slope change across it.
pub fn cpwl_to_relu_params(f: &CpwlFunction) -> ReluParams {
    let p = f.pieces();
    ReluParams {
        c0: p[0].intercept,
        m0: p[0].slope,
        knots: f.knots().to_vec(),
        coefficients: p.windows(2).map(|w| w[1].slope - w[0].slope).collect(),
    }
}
