//! Factories for the source/target pairs studied in the model.
//!
//! Every factory is deterministic and returns [`TransferInstance`] values
//! whose `truth` holds whatever is known in closed form. Quantities that are
//! only known up to a constant (such as the transfer coefficients of the
//! threshold-network family) are left empty and can be filled in with
//! [`crate::analysis::complete_truth`].

use serde::{Deserialize, Serialize};

use crate::distribution::{
    Atom, DiscreteDistribution, Distribution, LabelLaw, PiecewiseDistribution, Segment,
};
use crate::error::{Error, Result};
use crate::hypothesis::{BoundaryHypothesis, ClassKind, HierarchySpec, Label};

/// Scale constant of the gap family's inner intervals.
pub const GAP_C1: f64 = 32.0;

/// A valid `(ρ, C_ρ)` pair at one level. `coefficient` is `None` when only
/// the exponent is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentTruth {
    pub rho: f64,
    pub coefficient: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTruth {
    pub level: usize,
    pub exponents: Vec<ExponentTruth>,
    /// `E_Q(h*_{P,i})`.
    pub excess_q_of_source_minimizer: Option<f64>,
    pub beta_p: Option<f64>,
    pub beta_q: Option<f64>,
}

impl LevelTruth {
    fn new(level: usize, rho: f64, coefficient: Option<f64>, excess_q: f64, beta_p: f64, beta_q: f64) -> Self {
        LevelTruth {
            level,
            exponents: vec![ExponentTruth { rho, coefficient }],
            excess_q_of_source_minimizer: Some(excess_q),
            beta_p: Some(beta_p),
            beta_q: Some(beta_q),
        }
    }
}

/// Family selector plus its parameters, as read from experiment configs.
/// Sample sizes are supplied separately because several families depend
/// on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    ThresholdNn {
        rhos: Vec<f64>,
        /// Levels beyond `rhos.len()` to include in the hierarchy.
        #[serde(default)]
        max_level: Option<usize>,
    },
    ShiftedTarget {
        rhos: Vec<f64>,
        #[serde(default)]
        max_level: Option<usize>,
    },
    Gap {
        rho_a: f64,
        rho_b: f64,
        #[serde(default)]
        allow_precondition_violation: bool,
    },
    TwoPoint {
        alpha: f64,
        #[serde(default)]
        allow_precondition_violation: bool,
    },
    ExtendedGap {
        rho_a: f64,
        rho_b: f64,
        #[serde(default)]
        allow_precondition_violation: bool,
    },
    FixedClass {
        d: usize,
        beta_p: f64,
        beta_q: f64,
        rho: f64,
        alpha: f64,
        #[serde(default = "default_c2")]
        c2: f64,
        /// How many members of the family to build.
        #[serde(default = "default_sigma_count")]
        sigma_count: usize,
    },
}

fn default_c2() -> f64 {
    0.25
}

fn default_sigma_count() -> usize {
    4
}

impl FamilySpec {
    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::ThresholdNn { .. } => "threshold_nn",
            FamilySpec::ShiftedTarget { .. } => "shifted_target",
            FamilySpec::Gap { .. } => "gap",
            FamilySpec::TwoPoint { .. } => "two_point",
            FamilySpec::ExtendedGap { .. } => "extended_gap",
            FamilySpec::FixedClass { .. } => "fixed_class",
        }
    }

    /// Whether the built instances depend on the sample sizes.
    pub fn depends_on_sample_sizes(&self) -> bool {
        !matches!(self, FamilySpec::ThresholdNn { .. } | FamilySpec::ShiftedTarget { .. })
    }

    /// All members of the family for the given sample sizes.
    pub fn build(&self, n_p: usize, n_q: usize) -> Result<Vec<TransferInstance>> {
        match self {
            FamilySpec::ThresholdNn { rhos, max_level } => {
                let mut inst = build_threshold_nn(rhos, rhos.len())?;
                if let Some(m) = max_level {
                    inst = extend_threshold_levels(inst, *m)?;
                }
                Ok(vec![inst])
            }
            FamilySpec::ShiftedTarget { rhos, max_level } => {
                let mut inst = build_shifted_target(rhos)?;
                if let Some(m) = max_level {
                    inst = extend_threshold_levels(inst, *m)?;
                }
                Ok(vec![inst])
            }
            FamilySpec::Gap {
                rho_a,
                rho_b,
                allow_precondition_violation,
            } => build_gap_family_with(*rho_a, *rho_b, n_p, n_q, *allow_precondition_violation),
            FamilySpec::TwoPoint {
                alpha,
                allow_precondition_violation,
            } => build_two_point_family_with(*alpha, n_q, *allow_precondition_violation),
            FamilySpec::ExtendedGap {
                rho_a,
                rho_b,
                allow_precondition_violation,
            } => build_extended_gap_family_with(
                *rho_a,
                *rho_b,
                n_p,
                n_q,
                *allow_precondition_violation,
            ),
            FamilySpec::FixedClass {
                d,
                beta_p,
                beta_q,
                rho,
                alpha,
                c2,
                sigma_count,
            } => {
                let params = FixedClassParams {
                    d: *d,
                    beta_p: *beta_p,
                    beta_q: *beta_q,
                    rho: *rho,
                    alpha: *alpha,
                    n_p,
                    n_q,
                    c2: *c2,
                };
                (0..*sigma_count)
                    .map(|t| build_fixed_class(&params, &fixed_class_sigma(*d, t)))
                    .collect()
            }
        }
    }
}

/// A source/target pair over a truncated hierarchy, with ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferInstance {
    pub family: FamilySpec,
    /// Member index within the family; empty for single-member families.
    pub sigma: Vec<i8>,
    pub n_p: usize,
    pub n_q: usize,
    pub source: Distribution,
    pub target: Distribution,
    pub hierarchy: HierarchySpec,
    pub truth: Vec<LevelTruth>,
    pub i_star_p: Option<usize>,
    pub i_star_q: Option<usize>,
}

impl TransferInstance {
    pub fn truth_at(&self, level: usize) -> Option<&LevelTruth> {
        self.truth.iter().find(|t| t.level == level)
    }

    pub fn truth_at_mut(&mut self, level: usize) -> Option<&mut LevelTruth> {
        self.truth.iter_mut().find(|t| t.level == level)
    }

    pub fn distribution(&self, which: Which) -> &Distribution {
        match which {
            Which::P => &self.source,
            Which::Q => &self.target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.target.validate()?;
        self.hierarchy.validate()?;
        for idx in [self.i_star_p, self.i_star_q].into_iter().flatten() {
            self.hierarchy.check_level(idx)?;
        }
        for t in &self.truth {
            self.hierarchy.check_level(t.level)?;
        }
        Ok(())
    }

    /// Human-readable label such as `gap[+1,-1]`.
    pub fn tag(&self) -> String {
        if self.sigma.is_empty() {
            self.family.name().to_string()
        } else {
            let s: Vec<String> = self.sigma.iter().map(|v| format!("{v:+}")).collect();
            format!("{}[{}]", self.family.name(), s.join(","))
        }
    }
}

/// Source or target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Which {
    P,
    Q,
}

fn det(l: Label) -> LabelLaw {
    LabelLaw::Deterministic(l)
}

fn alternating(j: usize) -> Label {
    if j.is_multiple_of(2) {
        Label::Positive
    } else {
        Label::Negative
    }
}

fn check_rhos(rhos: &[f64]) -> Result<()> {
    if rhos.is_empty() {
        return Err(Error::InvalidParameter("need at least one level".into()));
    }
    if rhos.iter().any(|r| !r.is_finite() || *r < 1.0) {
        return Err(Error::InvalidParameter("exponents must be finite and ≥ 1".into()));
    }
    if rhos.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("exponents must be nondecreasing".into()));
    }
    Ok(())
}

/// Source law of the threshold-network family: region `R_m` (points whose
/// nearest `v_k` is `v_m`, ties to the smaller index) carries density
/// proportional to `2^(-(2mρ_m + m))·ρ_m·|x - v_m|^(ρ_m - 1)`.
fn threshold_source(rhos: &[f64]) -> Result<PiecewiseDistribution> {
    let l = rhos.len();
    let v: Vec<f64> = (1..=l).map(|k| k as f64 / (l + 1) as f64).collect();
    let mut edges = vec![0.0];
    edges.extend(v.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    edges.push(1.0);
    let mut halves = Vec::with_capacity(2 * l);
    for m in 0..l {
        let (lo, hi, vm, rho) = (edges[m], edges[m + 1], v[m], rhos[m]);
        let idx = (m + 1) as f64;
        let scale = (-(2.0 * idx * rho + idx) * std::f64::consts::LN_2).exp();
        halves.push((lo, vm, scale * (vm - lo).powf(rho), rho, vm, alternating(m)));
        halves.push((vm, hi, scale * (hi - vm).powf(rho), rho, vm, alternating(m + 1)));
    }
    let z: f64 = halves.iter().map(|h| h.2).sum();
    PiecewiseDistribution::new(
        halves
            .into_iter()
            .map(|(lo, hi, w, rho, vm, lab)| Segment::power_law(lo, hi, w / z, vm, rho, det(lab)))
            .collect(),
    )
}

/// Uniform law on `[0, 1]` labeled by alternating signs between `bounds`,
/// starting with `+1`.
fn uniform_labeled(bounds: &[f64]) -> Result<PiecewiseDistribution> {
    let mut edges = vec![0.0];
    edges.extend_from_slice(bounds);
    edges.push(1.0);
    PiecewiseDistribution::new(
        edges
            .windows(2)
            .enumerate()
            .map(|(j, w)| Segment::uniform(w[0], w[1], w[1] - w[0], det(alternating(j))))
            .collect(),
    )
}

/// Threshold-network family with `L = rhos.len()` levels.
///
/// ```
/// use model_transfer::constructions::build_threshold_nn;
///
/// let inst = build_threshold_nn(&[1.0, 2.0, 4.0], 3).unwrap();
/// assert_eq!(inst.i_star_p, Some(3));
/// assert_eq!(inst.truth_at(1).unwrap().excess_q_of_source_minimizer, Some(0.25));
/// ```
pub fn build_threshold_nn(rhos: &[f64], levels: usize) -> Result<TransferInstance> {
    if levels < 1 {
        return Err(Error::InvalidParameter("need L ≥ 1".into()));
    }
    if rhos.len() != levels {
        return Err(Error::InvalidParameter(format!(
            "expected {levels} exponents, got {}",
            rhos.len()
        )));
    }
    check_rhos(rhos)?;
    let l = levels;
    let v: Vec<f64> = (1..=l).map(|k| k as f64 / (l + 1) as f64).collect();
    let source = threshold_source(rhos)?;
    let target = uniform_labeled(&v)?;
    let truth = (1..=l)
        .map(|i| {
            let wrong = (l - i).div_ceil(2);
            LevelTruth::new(i, rhos[i - 1], None, wrong as f64 / (l + 1) as f64, 1.0, 1.0)
        })
        .collect();
    let inst = TransferInstance {
        family: FamilySpec::ThresholdNn {
            rhos: rhos.to_vec(),
            max_level: None,
        },
        sigma: Vec::new(),
        n_p: 0,
        n_q: 0,
        source: source.into(),
        target: target.into(),
        hierarchy: HierarchySpec::boundary_from(1, l),
        truth,
        i_star_p: Some(l),
        i_star_q: Some(l),
    };
    inst.validate()?;
    Ok(inst)
}

/// Same source as [`build_threshold_nn`] with `L = 3`, but the target's
/// boundaries sit halfway between consecutive `v_i` (with `v_4 = 1`), so
/// every level's source minimizer has the same target excess risk.
pub fn build_shifted_target(rhos: &[f64]) -> Result<TransferInstance> {
    if rhos.len() != 3 {
        return Err(Error::InvalidParameter("shifted target needs exactly 3 exponents".into()));
    }
    let mut inst = build_threshold_nn(rhos, 3)?;
    let v = [0.25, 0.5, 0.75, 1.0];
    let shifted: Vec<f64> = v.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    inst.target = uniform_labeled(&shifted)?.into();
    inst.family = FamilySpec::ShiftedTarget {
        rhos: rhos.to_vec(),
        max_level: None,
    };
    for t in &mut inst.truth {
        t.excess_q_of_source_minimizer = Some(3.0 / 8.0);
    }
    inst.validate()?;
    Ok(inst)
}

/// Adds boundary levels above `L` to a threshold-network style instance.
/// The extra levels share the level-`L` minimizer and exponent.
pub fn extend_threshold_levels(mut inst: TransferInstance, max_level: usize) -> Result<TransferInstance> {
    let top = inst.hierarchy.max_level;
    if max_level < top {
        return Err(Error::InvalidParameter(format!(
            "max_level {max_level} below the construction's {top} levels"
        )));
    }
    let base = inst
        .truth_at(top)
        .cloned()
        .ok_or(Error::MissingTruth { levels: vec![top] })?;
    for level in top + 1..=max_level {
        inst.truth.push(LevelTruth { level, ..base.clone() });
    }
    inst.hierarchy = HierarchySpec::boundary_from(inst.hierarchy.min_level, max_level);
    match &mut inst.family {
        FamilySpec::ThresholdNn { max_level: m, .. } | FamilySpec::ShiftedTarget { max_level: m, .. } => {
            *m = Some(max_level)
        }
        _ => {}
    }
    inst.validate()?;
    Ok(inst)
}

/// Named intervals of the gap family, as `[lo, hi)`.
pub mod gap_intervals {
    pub const L_OUT: (f64, f64) = (1.0 / 9.0, 1.0 / 3.0);
    pub const L_IN: (f64, f64) = (1.0 / 3.0, 4.0 / 9.0);
    pub const MID: (f64, f64) = (4.0 / 9.0, 5.0 / 9.0);
    pub const R_IN: (f64, f64) = (5.0 / 9.0, 2.0 / 3.0);
    pub const R_OUT: (f64, f64) = (2.0 / 3.0, 1.0);
}

/// The four classifiers of the gap family: `h_1, h'_1` (thresholds at 2/3
/// and 5/9) and `h_2, h'_2` (positive exactly on `[1/9, 1/3]` and
/// `[1/9, 4/9]`).
pub fn gap_hypotheses() -> [BoundaryHypothesis; 4] {
    use gap_intervals::*;
    let n = Label::Negative;
    [
        BoundaryHypothesis::new(vec![R_OUT.0], n).unwrap(),
        BoundaryHypothesis::new(vec![R_IN.0], n).unwrap(),
        BoundaryHypothesis::new(vec![L_OUT.0, L_OUT.1], n).unwrap(),
        BoundaryHypothesis::new(vec![L_OUT.0, L_IN.1], n).unwrap(),
    ]
}

fn gap_hierarchy() -> HierarchySpec {
    let [h1, h1p, h2, h2p] = gap_hypotheses();
    HierarchySpec {
        min_level: 1,
        max_level: 2,
        vc_dims: vec![1, 1],
        class: ClassKind::Finite {
            members: vec![vec![h1.clone(), h1p.clone()], vec![h1, h1p, h2, h2p]],
        },
    }
}

fn sign(v: i8) -> Label {
    if v < 0 {
        Label::Negative
    } else {
        Label::Positive
    }
}

/// `(1/(32 n_P))^(1/ρ)`.
pub fn gap_inner_mass(n_p: usize, rho: f64) -> f64 {
    (1.0 / (GAP_C1 * n_p as f64)).powf(1.0 / rho)
}

fn check_gap_params(rho_a: f64, rho_b: f64, n_p: usize) -> Result<()> {
    if !(rho_a.is_finite() && rho_b >= 1.0 && rho_a > rho_b) {
        return Err(Error::InvalidParameter(format!(
            "need rho_a > rho_b ≥ 1, got ({rho_a}, {rho_b})"
        )));
    }
    if n_p == 0 {
        return Err(Error::InvalidParameter("gap family needs n_P ≥ 1".into()));
    }
    Ok(())
}

fn gap_source(m: f64, sigma1: Label) -> Result<PiecewiseDistribution> {
    use gap_intervals::*;
    let p = Label::Positive;
    PiecewiseDistribution::new(vec![
        Segment::uniform(L_OUT.0, L_OUT.1, 1.0 / 3.0, det(p)),
        Segment::uniform(L_IN.0, L_IN.1, m, det(sigma1)),
        Segment::uniform(MID.0, MID.1, 5.0 / 12.0 - 2.0 * m, det(Label::Negative)),
        Segment::uniform(R_IN.0, R_IN.1, m, det(sigma1)),
        Segment::uniform(R_OUT.0, R_OUT.1, 0.25, det(p)),
    ])
}

/// The four-member gap family over `σ ∈ {±1}²`, in the order
/// `(+,+), (+,-), (-,+), (-,-)`.
pub fn build_gap_family(rho_a: f64, rho_b: f64, n_p: usize, n_q: usize) -> Result<Vec<TransferInstance>> {
    build_gap_family_with(rho_a, rho_b, n_p, n_q, false)
}

/// [`build_gap_family`], optionally skipping the sample-size precondition.
pub fn build_gap_family_with(
    rho_a: f64,
    rho_b: f64,
    n_p: usize,
    n_q: usize,
    allow_precondition_violation: bool,
) -> Result<Vec<TransferInstance>> {
    use gap_intervals::*;
    check_gap_params(rho_a, rho_b, n_p)?;
    let m = 1.0 / (GAP_C1 * n_p as f64);
    let a = gap_inner_mass(n_p, rho_a);
    let b = gap_inner_mass(n_p, rho_b);
    if !allow_precondition_violation && a > 1.0 / (GAP_C1 * n_q as f64) {
        return Err(Error::Precondition(format!(
            "gap-family sample-size constraint: (1/(32·{n_p}))^(1/{rho_a}) = {a:.3e} exceeds 1/(32·{n_q})"
        )));
    }
    let delta = a - b;
    let mut out = Vec::with_capacity(4);
    for (s1, s2) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
        let (l1, l2) = (sign(s1), sign(s2));
        let (lin, rin) = if s2 > 0 { (a, b) } else { (b, a) };
        let target = PiecewiseDistribution::new(vec![
            Segment::uniform(L_OUT.0, L_OUT.1, delta / 2.0, det(l1.times(l2).flip())),
            Segment::uniform(L_IN.0, L_IN.1, lin, det(l1)),
            Segment::uniform(MID.0, MID.1, 1.0 - 2.0 * a, det(Label::Negative)),
            Segment::uniform(R_IN.0, R_IN.1, rin, det(l1)),
            Segment::uniform(R_OUT.0, R_OUT.1, delta / 2.0, det(l2)),
        ])?;
        let (rho1, rho2) = if s2 > 0 { (rho_b, rho_a) } else { (rho_a, rho_b) };
        let inst = TransferInstance {
            family: FamilySpec::Gap {
                rho_a,
                rho_b,
                allow_precondition_violation,
            },
            sigma: vec![s1, s2],
            n_p,
            n_q,
            source: gap_source(m, l1)?.into(),
            target: target.into(),
            hierarchy: gap_hierarchy(),
            truth: vec![
                LevelTruth::new(1, rho1, Some(1.0), 0.0, 1.0, 1.0),
                LevelTruth::new(2, rho2, Some(1.0), 0.0, 1.0, 1.0),
            ],
            i_star_p: Some(2),
            i_star_q: Some(1),
        };
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}

/// Variant of the gap family over the full classes of one-sided
/// thresholds (level 1) and one-sided intervals (level 2), with power-law
/// target densities on the inner intervals.
pub fn build_extended_gap_family(
    rho_a: f64,
    rho_b: f64,
    n_p: usize,
    n_q: usize,
) -> Result<Vec<TransferInstance>> {
    build_extended_gap_family_with(rho_a, rho_b, n_p, n_q, false)
}

pub fn build_extended_gap_family_with(
    rho_a: f64,
    rho_b: f64,
    n_p: usize,
    n_q: usize,
    allow_precondition_violation: bool,
) -> Result<Vec<TransferInstance>> {
    use gap_intervals::*;
    check_gap_params(rho_a, rho_b, n_p)?;
    let m = 1.0 / (GAP_C1 * n_p as f64);
    let a = gap_inner_mass(n_p, rho_a);
    let b = gap_inner_mass(n_p, rho_b);
    let limit = (1.0 / 24.0f64).min(1.0 / (GAP_C1 * n_q as f64));
    if !allow_precondition_violation && a > limit {
        return Err(Error::Precondition(format!(
            "gap-family sample-size constraint: (1/(32·{n_p}))^(1/{rho_a}) = {a:.3e} exceeds min(1/24, 1/(32·{n_q}))"
        )));
    }
    let delta = a - b;
    let l_center = (L_IN.0 + L_IN.1) / 2.0;
    let r_center = (R_IN.0 + R_IN.1) / 2.0;
    let mut out = Vec::with_capacity(4);
    for (s1, s2) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
        let l1 = sign(s1);
        let (lin, rin, rho_l, rho_r) = if s2 > 0 {
            (a, b, rho_a, rho_b)
        } else {
            (b, a, rho_b, rho_a)
        };
        let (lout, rout) = match (s1, s2) {
            (1, 1) => (0.0, delta),
            (1, _) => (delta, 0.0),
            _ => (delta / 2.0, delta / 2.0),
        };
        let p = Label::Positive;
        let target = PiecewiseDistribution::new(vec![
            Segment::uniform(L_OUT.0, L_OUT.1, lout, det(p)),
            Segment::power_law(L_IN.0, L_IN.1, lin, l_center, 1.0 / rho_l, det(l1)),
            Segment::uniform(MID.0, MID.1, 1.0 - 2.0 * a, det(Label::Negative)),
            Segment::power_law(R_IN.0, R_IN.1, rin, r_center, 1.0 / rho_r, det(l1)),
            Segment::uniform(R_OUT.0, R_OUT.1, rout, det(p)),
        ])?;
        let (rho1, rho2) = if s2 > 0 { (rho_b, rho_a) } else { (rho_a, rho_b) };
        let inst = TransferInstance {
            family: FamilySpec::ExtendedGap {
                rho_a,
                rho_b,
                allow_precondition_violation,
            },
            sigma: vec![s1, s2],
            n_p,
            n_q,
            source: gap_source(m, l1)?.into(),
            target: target.into(),
            hierarchy: HierarchySpec {
                min_level: 1,
                max_level: 2,
                vc_dims: vec![1, 2],
                class: ClassKind::Boundary {
                    first_sign: Some(Label::Negative),
                },
            },
            truth: vec![
                LevelTruth::new(1, rho1, Some(1.0), 0.0, 1.0, 1.0),
                LevelTruth::new(2, rho2, Some(1.0), 0.0, 1.0, 1.0),
            ],
            i_star_p: Some(2),
            i_star_q: Some(1),
        };
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}

/// Support points of the two-point family.
pub const TWO_POINTS: [f64; 2] = [0.25, 0.75];

/// `h_1 = const +1` and the other level-1 member `(-1, +1)`, then the
/// level-2 additions `h_2 = (+1, -1)` and `const -1`.
pub fn two_point_hypotheses() -> [BoundaryHypothesis; 4] {
    let mid = (TWO_POINTS[0] + TWO_POINTS[1]) / 2.0;
    [
        BoundaryHypothesis::constant(Label::Positive),
        BoundaryHypothesis::new(vec![mid], Label::Negative).unwrap(),
        BoundaryHypothesis::new(vec![mid], Label::Positive).unwrap(),
        BoundaryHypothesis::constant(Label::Negative),
    ]
}

/// Two members indexed by `σ ∈ {1, 2}`; member `σ` has `h_σ` as its
/// target-optimal classifier.
pub fn build_two_point_family(alpha: f64, n_q: usize) -> Result<Vec<TransferInstance>> {
    build_two_point_family_with(alpha, n_q, false)
}

pub fn build_two_point_family_with(
    alpha: f64,
    n_q: usize,
    allow_precondition_violation: bool,
) -> Result<Vec<TransferInstance>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
    }
    if !allow_precondition_violation && n_q > 0 && alpha > 1.0 / (2.0 * n_q as f64) {
        return Err(Error::Precondition(format!(
            "two-point constraint: alpha = {alpha} exceeds 1/(2·{n_q})"
        )));
    }
    let [h1, h1_other, h2, neg] = two_point_hypotheses();
    let hierarchy = HierarchySpec {
        min_level: 1,
        max_level: 2,
        vc_dims: vec![1, 2],
        class: ClassKind::Finite {
            members: vec![
                vec![h1.clone(), h1_other.clone()],
                vec![h1.clone(), h1_other, h2.clone(), neg],
            ],
        },
    };
    let [x0, x1] = TWO_POINTS;
    let source = DiscreteDistribution::new(vec![
        Atom { x: x0, mass: 0.5, label: det(h2.evaluate(x0)) },
        Atom { x: x1, mass: 0.5, label: det(h2.evaluate(x1)) },
    ])?;
    let mut out = Vec::with_capacity(2);
    for sigma in [1i8, 2] {
        let h = if sigma == 1 { &h1 } else { &h2 };
        let target = DiscreteDistribution::new(vec![
            Atom { x: x0, mass: 1.0 - alpha, label: det(h.evaluate(x0)) },
            Atom { x: x1, mass: alpha, label: det(h.evaluate(x1)) },
        ])?;
        let (e1, e2) = if sigma == 1 { (0.0, alpha) } else { (alpha, 0.0) };
        let inst = TransferInstance {
            family: FamilySpec::TwoPoint {
                alpha,
                allow_precondition_violation,
            },
            sigma: vec![sigma],
            n_p: 0,
            n_q,
            source: source.clone().into(),
            target: target.into(),
            hierarchy: hierarchy.clone(),
            truth: vec![
                LevelTruth::new(1, 1.0, None, e1, 1.0, 1.0),
                LevelTruth::new(2, 1.0, None, e2, 1.0, 1.0),
            ],
            i_star_p: Some(2),
            i_star_q: Some(if sigma == 1 || alpha == 0.0 { 1 } else { 2 }),
        };
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}

/// Parameters of the fixed-class family over `d` shattered points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedClassParams {
    pub d: usize,
    pub beta_p: f64,
    pub beta_q: f64,
    pub rho: f64,
    pub alpha: f64,
    pub n_p: usize,
    pub n_q: usize,
    pub c2: f64,
}

impl FixedClassParams {
    /// `ε_2 = c_2·min(α, (d/n_Q)^(1/(2-β_Q)))`.
    pub fn epsilon2(&self) -> f64 {
        let eq = if self.n_q == 0 {
            f64::INFINITY
        } else {
            (self.d as f64 / self.n_q as f64).powf(1.0 / (2.0 - self.beta_q))
        };
        self.c2 * self.alpha.min(eq)
    }
}

/// Deterministic `σ` patterns used by [`FamilySpec::FixedClass`]: all
/// `+1`, all `-1`, then alternating patterns and binary counters.
pub fn fixed_class_sigma(d: usize, t: usize) -> Vec<i8> {
    (0..d - 1)
        .map(|i| match t {
            0 => 1,
            1 => -1,
            2 => if i % 2 == 0 { 1 } else { -1 },
            3 => if i % 2 == 0 { -1 } else { 1 },
            _ => if (t >> (i % 16)) & 1 == 1 { 1 } else { -1 },
        })
        .collect()
}

/// One member of the fixed-class family.
pub fn build_fixed_class(params: &FixedClassParams, sigma: &[i8]) -> Result<TransferInstance> {
    let FixedClassParams {
        d,
        beta_p,
        beta_q,
        rho,
        alpha,
        n_p,
        n_q,
        c2,
    } = *params;
    if d < 9 {
        return Err(Error::Precondition(format!("need d ≥ 9, got {d}")));
    }
    if sigma.len() != d - 1 || sigma.iter().any(|s| s.abs() != 1) {
        return Err(Error::InvalidParameter(format!(
            "sigma must hold {} entries in {{-1, +1}}",
            d - 1
        )));
    }
    if !((0.0..1.0).contains(&beta_p) && (0.0..1.0).contains(&beta_q)) {
        return Err(Error::InvalidParameter("betas must lie in [0, 1)".into()));
    }
    if !(rho >= 1.0 && (0.0..=1.0).contains(&alpha) && c2 > 0.0) {
        return Err(Error::InvalidParameter("need rho ≥ 1, alpha in [0, 1], c2 > 0".into()));
    }
    if n_p.max(n_q) <= d {
        return Err(Error::Precondition(format!(
            "need max(n_P, n_Q) > d, got max({n_p}, {n_q}) with d = {d}"
        )));
    }
    let eps = params.epsilon2();
    let tilt = eps.powf(1.0 - beta_q);
    if tilt >= 0.5 {
        return Err(Error::Precondition(format!(
            "need ε_2^(1-β_Q) < 1/2, got {tilt}"
        )));
    }
    let outer = eps.powf(beta_q);
    if 1.0 - outer <= 0.0 {
        return Err(Error::Precondition(format!(
            "Q_X(x_0) = 1 - ε_2^β_Q = {} leaves no mass on x_0",
            1.0 - outer
        )));
    }
    let xs: Vec<f64> = (0..d).map(|i| (i as f64 + 0.5) / d as f64).collect();
    let source = DiscreteDistribution::new(
        xs.iter()
            .map(|&x| Atom { x, mass: 1.0 / d as f64, label: det(Label::Positive) })
            .collect(),
    )?;
    let mut atoms = vec![Atom { x: xs[0], mass: 1.0 - outer, label: det(Label::Positive) }];
    for (i, &s) in sigma.iter().enumerate() {
        atoms.push(Atom {
            x: xs[i + 1],
            mass: outer / (d - 1) as f64,
            label: LabelLaw::Bernoulli(0.5 + s as f64 * tilt / 4.0),
        });
    }
    let target = DiscreteDistribution::new(atoms)?;
    // Each x_i with σ_i = -1 costs ε_2 / (2(d-1)) for the all-positive
    // source minimizer. Flipping a σ_i = +1 point costs 1/d under P and
    // ε_2/(2(d-1)) under Q, so ρ = 1 holds with this coefficient.
    let negatives = sigma.iter().filter(|&&s| s < 0).count();
    let excess = negatives as f64 * eps / (2.0 * (d - 1) as f64);
    let coeff = eps * d as f64 / (2.0 * (d - 1) as f64);
    let inst = TransferInstance {
        family: FamilySpec::FixedClass {
            d,
            beta_p,
            beta_q,
            rho,
            alpha,
            c2,
            sigma_count: 1,
        },
        sigma: sigma.to_vec(),
        n_p,
        n_q,
        source: source.into(),
        target: target.into(),
        hierarchy: HierarchySpec {
            min_level: 1,
            max_level: 1,
            vc_dims: vec![d],
            class: ClassKind::Tabular { support: xs },
        },
        truth: vec![LevelTruth {
            level: 1,
            exponents: vec![ExponentTruth { rho: 1.0, coefficient: Some(coeff) }],
            excess_q_of_source_minimizer: Some(excess),
            beta_p: Some(1.0),
            beta_q: Some(beta_q),
        }],
        i_star_p: Some(1),
        i_star_q: Some(1),
    };
    inst.validate()?;
    Ok(inst)
}

/// Exact probability that no source draw lands in `L_in ∪ R_in` and no
/// target draw leaves the middle interval.
pub fn event_b_probability(inst: &TransferInstance) -> Result<f64> {
    let rho_a = match &inst.family {
        FamilySpec::Gap { rho_a, .. } | FamilySpec::ExtendedGap { rho_a, .. } => *rho_a,
        other => {
            return Err(Error::WrongFamily {
                expected: "gap".into(),
                got: other.name().into(),
            })
        }
    };
    let n_p = inst.n_p as f64;
    let a = gap_inner_mass(inst.n_p, rho_a);
    Ok((1.0 - 2.0 / (GAP_C1 * n_p)).powf(n_p) * (1.0 - 2.0 * a).powf(inst.n_q as f64))
}
