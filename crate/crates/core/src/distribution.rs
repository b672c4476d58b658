//! Joint laws of `(X, Y)` with exact risk integration and seeded sampling.
//!
//! A [`PiecewiseDistribution`] splits the line into disjoint segments, each
//! with a mass, a uniform or power-law density, and a label law. A
//! [`DiscreteDistribution`] puts its mass on finitely many atoms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{BoundaryHypothesis, Hypothesis, Label};

const MASS_TOL: f64 = 1e-12;

/// Density of X within a segment, up to normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Uniform,
    /// Density proportional to `|x - anchor|^(exponent - 1)`.
    PowerLaw { anchor: f64, exponent: f64 },
}

/// Conditional law of Y given X within a segment or at an atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelLaw {
    Deterministic(Label),
    /// `q` is the probability that `Y = +1`.
    Bernoulli(f64),
}

impl LabelLaw {
    pub fn prob_positive(&self) -> f64 {
        match *self {
            LabelLaw::Deterministic(Label::Positive) => 1.0,
            LabelLaw::Deterministic(Label::Negative) => 0.0,
            LabelLaw::Bernoulli(q) => q,
        }
    }

    /// Probability that a prediction of `label` is wrong.
    pub fn error_of(&self, label: Label) -> f64 {
        match (*self, label) {
            (LabelLaw::Deterministic(y), l) => {
                if y == l {
                    0.0
                } else {
                    1.0
                }
            }
            (LabelLaw::Bernoulli(q), Label::Positive) => 1.0 - q,
            (LabelLaw::Bernoulli(q), Label::Negative) => q,
        }
    }

    /// The label minimizing the error, `+1` on ties.
    pub fn bayes_label(&self) -> Label {
        if self.prob_positive() >= 0.5 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    fn draw(&self, u: f64) -> Label {
        match *self {
            LabelLaw::Deterministic(y) => y,
            LabelLaw::Bernoulli(q) => {
                if u < q {
                    Label::Positive
                } else {
                    Label::Negative
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LabelLaw::Bernoulli(q) if !(0.0..=1.0).contains(&q) => Err(Error::InvalidSegment(
                format!("Bernoulli parameter {q} outside [0, 1]"),
            )),
            _ => Ok(()),
        }
    }
}

/// A segment `[lo, hi)` carrying `mass` of the X-marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSegment", into = "RawSegment")]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    pub shape: Shape,
    pub label: LabelLaw,
}

impl Segment {
    pub fn uniform(lo: f64, hi: f64, mass: f64, label: LabelLaw) -> Self {
        Segment {
            lo,
            hi,
            mass,
            shape: Shape::Uniform,
            label,
        }
    }

    pub fn power_law(lo: f64, hi: f64, mass: f64, anchor: f64, exponent: f64, label: LabelLaw) -> Self {
        Segment {
            lo,
            hi,
            mass,
            shape: Shape::PowerLaw { anchor, exponent },
            label,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::InvalidSegment(format!(
                "need finite lo < hi, got [{}, {})",
                self.lo, self.hi
            )));
        }
        if !(self.mass.is_finite() && self.mass >= 0.0) {
            return Err(Error::InvalidSegment(format!("bad mass {}", self.mass)));
        }
        if let Shape::PowerLaw { anchor, exponent } = self.shape {
            if !(anchor.is_finite() && exponent.is_finite() && exponent > 0.0) {
                return Err(Error::InvalidSegment(format!(
                    "power law needs finite anchor and positive exponent, got ({anchor}, {exponent})"
                )));
            }
        }
        self.label.validate()
    }

    /// Unnormalized CDF: `sign(x - v)·|x - v|^p` for power laws.
    fn g(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Uniform => x,
            Shape::PowerLaw { anchor, exponent } => {
                let d = x - anchor;
                d.signum() * d.abs().powf(exponent)
            }
        }
    }

    fn g_inv(&self, y: f64) -> f64 {
        match self.shape {
            Shape::Uniform => y,
            Shape::PowerLaw { anchor, exponent } => anchor + y.signum() * y.abs().powf(1.0 / exponent),
        }
    }

    /// Mass of `[a, b] ∩ [lo, hi)`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let a = a.max(self.lo);
        let b = b.min(self.hi);
        if b <= a || self.mass == 0.0 {
            return 0.0;
        }
        if a == self.lo && b == self.hi {
            return self.mass;
        }
        let total = self.g(self.hi) - self.g(self.lo);
        (self.mass * (self.g(b) - self.g(a)) / total).clamp(0.0, self.mass)
    }

    /// Inverse CDF within the segment, `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let (glo, ghi) = (self.g(self.lo), self.g(self.hi));
        let x = self.g_inv(glo + u * (ghi - glo));
        x.clamp(self.lo, self.hi)
    }
}

#[derive(Serialize, Deserialize)]
struct RawSegment {
    lo: f64,
    hi: f64,
    mass: f64,
    #[serde(default = "default_shape")]
    shape: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
}

fn default_shape() -> String {
    "uniform".into()
}

impl TryFrom<RawSegment> for Segment {
    type Error = Error;

    fn try_from(r: RawSegment) -> Result<Self> {
        let shape = match r.shape.as_str() {
            "uniform" => Shape::Uniform,
            "power_law" => Shape::PowerLaw {
                anchor: r
                    .anchor
                    .ok_or_else(|| Error::InvalidSegment("power_law needs anchor".into()))?,
                exponent: r
                    .exponent
                    .ok_or_else(|| Error::InvalidSegment("power_law needs exponent".into()))?,
            },
            other => return Err(Error::InvalidSegment(format!("unknown shape {other}"))),
        };
        let label = match (r.label, r.q) {
            (Some(l), None) => LabelLaw::Deterministic(l),
            (None, Some(q)) => LabelLaw::Bernoulli(q),
            _ => {
                return Err(Error::InvalidSegment(
                    "give exactly one of label or q".into(),
                ))
            }
        };
        let s = Segment {
            lo: r.lo,
            hi: r.hi,
            mass: r.mass,
            shape,
            label,
        };
        s.validate()?;
        Ok(s)
    }
}

impl From<Segment> for RawSegment {
    fn from(s: Segment) -> Self {
        let (shape, anchor, exponent) = match s.shape {
            Shape::Uniform => ("uniform", None, None),
            Shape::PowerLaw { anchor, exponent } => ("power_law", Some(anchor), Some(exponent)),
        };
        let (label, q) = match s.label {
            LabelLaw::Deterministic(l) => (Some(l), None),
            LabelLaw::Bernoulli(q) => (None, Some(q)),
        };
        RawSegment {
            lo: s.lo,
            hi: s.hi,
            mass: s.mass,
            shape: shape.into(),
            anchor,
            exponent,
            label,
            q,
        }
    }
}

/// Mixture of disjoint segments, kept sorted by `lo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPiecewise")]
pub struct PiecewiseDistribution {
    segments: Vec<Segment>,
}

#[derive(Deserialize)]
struct RawPiecewise {
    segments: Vec<Segment>,
}

impl TryFrom<RawPiecewise> for PiecewiseDistribution {
    type Error = Error;

    fn try_from(r: RawPiecewise) -> Result<Self> {
        PiecewiseDistribution::new(r.segments)
    }
}

impl PiecewiseDistribution {
    pub fn new(mut segments: Vec<Segment>) -> Result<Self> {
        segments.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
        let d = PiecewiseDistribution { segments };
        d.validate()?;
        Ok(d)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.segments {
            s.validate()?;
        }
        if self.segments.windows(2).any(|w| w[0].hi > w[1].lo) {
            return Err(Error::OverlappingSegments);
        }
        let total: f64 = self.segments.iter().map(|s| s.mass).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::MassNotNormalized { total });
        }
        Ok(())
    }

    pub fn region_mass(&self, lo: f64, hi: f64) -> f64 {
        self.segments.iter().map(|s| s.mass_between(lo, hi)).sum()
    }

    /// Endpoints of every segment and every power-law anchor inside one.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in &self.segments {
            out.push(s.lo);
            out.push(s.hi);
            if let Shape::PowerLaw { anchor, .. } = s.shape {
                if anchor > s.lo && anchor < s.hi {
                    out.push(anchor);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Mass on which `label` errs, restricted to `[a, b]`.
    pub fn error_mass(&self, a: f64, b: f64, label: Label) -> f64 {
        self.segments
            .iter()
            .map(|s| s.mass_between(a, b) * s.label.error_of(label))
            .sum()
    }

    fn boundary_risk(&self, h: &BoundaryHypothesis) -> f64 {
        let cells = h.intervals();
        self.segments
            .iter()
            .map(|s| {
                cells
                    .iter()
                    .map(|&(a, b, l)| s.mass_between(a, b) * s.label.error_of(l))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// A single atom of a discrete law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAtom", into = "RawAtom")]
pub struct Atom {
    pub x: f64,
    pub mass: f64,
    pub label: LabelLaw,
}

#[derive(Serialize, Deserialize)]
struct RawAtom {
    x: f64,
    mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
}

impl TryFrom<RawAtom> for Atom {
    type Error = Error;

    fn try_from(r: RawAtom) -> Result<Self> {
        let label = match (r.label, r.q) {
            (Some(l), None) => LabelLaw::Deterministic(l),
            (None, Some(q)) => LabelLaw::Bernoulli(q),
            _ => return Err(Error::InvalidSegment("give exactly one of label or q".into())),
        };
        Ok(Atom {
            x: r.x,
            mass: r.mass,
            label,
        })
    }
}

impl From<Atom> for RawAtom {
    fn from(a: Atom) -> Self {
        let (label, q) = match a.label {
            LabelLaw::Deterministic(l) => (Some(l), None),
            LabelLaw::Bernoulli(q) => (None, Some(q)),
        };
        RawAtom {
            x: a.x,
            mass: a.mass,
            label,
            q,
        }
    }
}

/// Finite-support law, atoms sorted by `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDiscrete")]
pub struct DiscreteDistribution {
    atoms: Vec<Atom>,
}

#[derive(Deserialize)]
struct RawDiscrete {
    atoms: Vec<Atom>,
}

impl TryFrom<RawDiscrete> for DiscreteDistribution {
    type Error = Error;

    fn try_from(r: RawDiscrete) -> Result<Self> {
        DiscreteDistribution::new(r.atoms)
    }
}

impl DiscreteDistribution {
    pub fn new(mut atoms: Vec<Atom>) -> Result<Self> {
        atoms.sort_by(|a, b| a.x.total_cmp(&b.x));
        let d = DiscreteDistribution { atoms };
        d.validate()?;
        Ok(d)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn support(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.x).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for a in &self.atoms {
            if !(a.x.is_finite() && a.mass.is_finite() && a.mass >= 0.0) {
                return Err(Error::InvalidSegment(format!("bad atom at {}", a.x)));
            }
            a.label.validate()?;
        }
        if let Some(w) = self.atoms.windows(2).find(|w| w[0].x == w[1].x) {
            return Err(Error::DuplicateAtom(w[0].x));
        }
        let total: f64 = self.atoms.iter().map(|a| a.mass).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::MassNotNormalized { total });
        }
        Ok(())
    }

    /// Mass of atoms in `[lo, hi)`.
    pub fn region_mass(&self, lo: f64, hi: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.x >= lo && a.x < hi)
            .map(|a| a.mass)
            .sum()
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleSource {
    P,
    Q,
    QHoldout,
}

/// Labeled points sorted by `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    xs: Vec<f64>,
    ys: Vec<Label>,
    pub seed: u64,
    pub source: SampleSource,
}

impl LabeledSample {
    /// Builds a sample from records in any order. Records with equal `x`
    /// keep their relative order.
    pub fn new(mut records: Vec<(f64, Label)>, seed: u64, source: SampleSource) -> Self {
        records.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (xs, ys) = records.into_iter().unzip();
        LabeledSample {
            xs,
            ys,
            seed,
            source,
        }
    }

    pub fn from_pairs(records: Vec<(f64, Label)>) -> Self {
        LabeledSample::new(records, 0, SampleSource::P)
    }

    pub fn empty(source: SampleSource) -> Self {
        LabeledSample::new(Vec::new(), 0, source)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[Label] {
        &self.ys
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, Label)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }
}

/// Either kind of joint law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Piecewise(PiecewiseDistribution),
    Discrete(DiscreteDistribution),
}

impl From<PiecewiseDistribution> for Distribution {
    fn from(d: PiecewiseDistribution) -> Self {
        Distribution::Piecewise(d)
    }
}

impl From<DiscreteDistribution> for Distribution {
    fn from(d: DiscreteDistribution) -> Self {
        Distribution::Discrete(d)
    }
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            Distribution::Piecewise(d) => d.validate(),
            Distribution::Discrete(d) => d.validate(),
        }
    }

    /// X-marginal mass of `[lo, hi)`.
    pub fn region_mass(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Distribution::Piecewise(d) => d.region_mass(lo, hi),
            Distribution::Discrete(d) => d.region_mass(lo, hi),
        }
    }

    pub fn bayes_risk(&self) -> f64 {
        match self {
            Distribution::Piecewise(d) => d
                .segments
                .iter()
                .map(|s| s.mass * s.label.prob_positive().min(1.0 - s.label.prob_positive()))
                .sum(),
            Distribution::Discrete(d) => d
                .atoms
                .iter()
                .map(|a| a.mass * a.label.prob_positive().min(1.0 - a.label.prob_positive()))
                .sum(),
        }
    }

    /// `Pr[h(X) ≠ Y]`, integrated exactly.
    pub fn risk(&self, h: &Hypothesis) -> Result<f64> {
        match (self, h) {
            (Distribution::Piecewise(d), Hypothesis::Boundary(b)) => Ok(d.boundary_risk(b)),
            (Distribution::Piecewise(d), Hypothesis::Tabular(_)) => {
                let x = d.segments.first().map_or(0.0, |s| s.lo);
                Err(Error::OffSupport(x))
            }
            (Distribution::Discrete(d), h) => {
                let mut total = 0.0;
                for a in &d.atoms {
                    if a.mass > 0.0 {
                        total += a.mass * a.label.error_of(h.evaluate(a.x)?);
                    }
                }
                Ok(total)
            }
        }
    }

    /// `R(h) - R(g)`, integrated only where the two disagree so that tiny
    /// differences do not cancel against large common risks.
    pub fn risk_difference(&self, h: &Hypothesis, g: &Hypothesis) -> Result<f64> {
        match (self, h, g) {
            (Distribution::Piecewise(d), Hypothesis::Boundary(h), Hypothesis::Boundary(g)) => {
                Ok(disagreement_cells(h, g)
                    .into_iter()
                    .map(|(a, b, hl)| {
                        d.segments
                            .iter()
                            .map(|s| {
                                let m = s.mass_between(a, b);
                                m * (s.label.error_of(hl) - s.label.error_of(hl.flip()))
                            })
                            .sum::<f64>()
                    })
                    .sum())
            }
            (Distribution::Discrete(d), h, g) => {
                let mut total = 0.0;
                for a in &d.atoms {
                    if a.mass == 0.0 {
                        continue;
                    }
                    let (lh, lg) = (h.evaluate(a.x)?, g.evaluate(a.x)?);
                    if lh != lg {
                        total += a.mass * (a.label.error_of(lh) - a.label.error_of(lg));
                    }
                }
                Ok(total)
            }
            _ => Ok(self.risk(h)? - self.risk(g)?),
        }
    }

    /// `Pr[h(X) ≠ g(X)]`.
    pub fn disagreement(&self, h: &Hypothesis, g: &Hypothesis) -> Result<f64> {
        match (self, h, g) {
            (Distribution::Piecewise(d), Hypothesis::Boundary(h), Hypothesis::Boundary(g)) => {
                Ok(disagreement_cells(h, g)
                    .into_iter()
                    .map(|(a, b, _)| d.region_mass(a, b))
                    .sum())
            }
            (Distribution::Discrete(d), h, g) => {
                let mut total = 0.0;
                for a in &d.atoms {
                    if a.mass > 0.0 && h.evaluate(a.x)? != g.evaluate(a.x)? {
                        total += a.mass;
                    }
                }
                Ok(total)
            }
            (Distribution::Piecewise(d), _, _) => {
                let x = d.segments.first().map_or(0.0, |s| s.lo);
                Err(Error::OffSupport(x))
            }
        }
    }

    /// `n` i.i.d. draws. Each draw consumes three uniforms in order:
    /// component, position within it, label.
    pub fn sample(&self, n: usize, seed: u64, source: SampleSource) -> LabeledSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let masses: Vec<f64> = match self {
            Distribution::Piecewise(d) => d.segments.iter().map(|s| s.mass).collect(),
            Distribution::Discrete(d) => d.atoms.iter().map(|a| a.mass).collect(),
        };
        let cum: Vec<f64> = masses
            .iter()
            .scan(0.0, |acc, &m| {
                *acc += m;
                Some(*acc)
            })
            .collect();
        let total = cum.last().copied().unwrap_or(0.0);
        let last_positive = masses.iter().rposition(|&m| m > 0.0).unwrap_or(0);
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            let u_comp: f64 = rng.random();
            let u_x: f64 = rng.random();
            let u_y: f64 = rng.random();
            let t = u_comp * total;
            let k = cum.partition_point(|&c| c <= t).min(last_positive);
            let (x, law) = match self {
                Distribution::Piecewise(d) => {
                    let s = &d.segments[k];
                    (s.quantile(u_x), s.label)
                }
                Distribution::Discrete(d) => (d.atoms[k].x, d.atoms[k].label),
            };
            records.push((x, law.draw(u_y)));
        }
        LabeledSample::new(records, seed, source)
    }

    /// Points where the X-density or the label law can change.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Distribution::Piecewise(d) => d.breakpoints(),
            Distribution::Discrete(d) => d.support(),
        }
    }
}

/// Cells `(lo, hi, label_of_h)` on which `h` and `g` disagree. Cells are
/// delimited by the union of both boundary sets.
pub(crate) fn disagreement_cells(h: &BoundaryHypothesis, g: &BoundaryHypothesis) -> Vec<(f64, f64, Label)> {
    let mut edges: Vec<f64> = h
        .boundaries()
        .iter()
        .chain(g.boundaries())
        .copied()
        .collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let mut out = Vec::new();
    let mut lo = f64::NEG_INFINITY;
    for i in 0..=edges.len() {
        let hi = edges.get(i).copied().unwrap_or(f64::INFINITY);
        let probe = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => lo + (hi - lo) / 2.0,
            (false, true) => hi - 1.0,
            (true, false) => lo + 1.0,
            (false, false) => 0.0,
        };
        let (lh, lg) = (h.evaluate(probe), g.evaluate(probe));
        if lh != lg {
            out.push((lo, hi, lh));
        }
        lo = hi;
    }
    out
}
