//! Ground-truth quantities of a [`TransferInstance`]: exact excess risks,
//! per-level risk minimizers, transfer-exponent and noise-condition
//! estimates, and the rate functionals `φ♯`/`φ♭`.

use std::cmp::Ordering;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::constructions::{ExponentTruth, TransferInstance, Which};
use crate::distribution::{Distribution, SampleSource};
use crate::erm::tie_break;
use crate::error::{Error, Result};
use crate::hypothesis::{midpoint, BoundaryHypothesis, ClassKind, Hypothesis, Label, TabularHypothesis};
use crate::selection::level_delta;

/// Risks closer than this count as tied.
pub const RISK_TOL: f64 = 1e-13;
/// Excess risks below this are treated as zero in ratio computations.
pub const DEGENERATE: f64 = 1e-12;
/// Largest tabular support enumerated exhaustively.
pub const TABULAR_CAP: usize = 20;

fn cmp_tol(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= RISK_TOL {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

/// Lexicographic objective: primary risk, then the negated secondary risk
/// (so that larger secondary risk wins), then boundary count.
#[derive(Debug, Clone, Copy)]
struct Cost {
    primary: f64,
    secondary: f64,
    flips: usize,
}

impl Cost {
    const ZERO: Cost = Cost { primary: 0.0, secondary: 0.0, flips: 0 };

    fn plus(self, o: Cost) -> Cost {
        Cost {
            primary: self.primary + o.primary,
            secondary: self.secondary + o.secondary,
            flips: self.flips + o.flips,
        }
    }

    fn cmp(&self, o: &Cost) -> Ordering {
        cmp_tol(self.primary, o.primary)
            .then(cmp_tol(self.secondary, o.secondary))
            .then(self.flips.cmp(&o.flips))
    }
}

fn cell_error(d: &Distribution, lo: f64, hi: f64, label: Label) -> f64 {
    match d {
        Distribution::Piecewise(p) => p.error_mass(lo, hi, label),
        Distribution::Discrete(dd) => dd
            .atoms()
            .iter()
            .filter(|a| a.x > lo && a.x <= hi)
            .map(|a| a.mass * a.label.error_of(label))
            .sum(),
    }
}

/// Candidate boundary positions: piecewise breakpoints, and midpoints
/// between consecutive atoms of discrete laws.
pub fn cut_points(dists: &[&Distribution]) -> Vec<f64> {
    let mut cuts = Vec::new();
    let mut atoms = Vec::new();
    for d in dists {
        match d {
            Distribution::Piecewise(p) => cuts.extend(p.breakpoints()),
            Distribution::Discrete(dd) => atoms.extend(dd.support()),
        }
    }
    atoms.sort_by(f64::total_cmp);
    atoms.dedup();
    cuts.extend(atoms.windows(2).map(|w| midpoint(w[0], w[1])));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

fn label_of(s: usize) -> Label {
    if s == 0 {
        Label::Positive
    } else {
        Label::Negative
    }
}

fn lex_boundaries(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(a.len().cmp(&b.len()))
}

/// Exact minimizer over boundary hypotheses with at most `level`
/// boundaries placed on `cuts`. Suffix dynamic program over the cells
/// between cuts, then an earliest-flip reconstruction.
fn boundary_minimizer(
    primary: &Distribution,
    secondary: Option<&Distribution>,
    cuts: &[f64],
    level: usize,
    pinned: Option<Label>,
) -> BoundaryHypothesis {
    let k = cuts.len() + 1;
    let cost: Vec<[Cost; 2]> = (0..k)
        .map(|c| {
            let lo = if c == 0 { f64::NEG_INFINITY } else { cuts[c - 1] };
            let hi = if c == k - 1 { f64::INFINITY } else { cuts[c] };
            [0, 1].map(|s| Cost {
                primary: cell_error(primary, lo, hi, label_of(s)),
                secondary: secondary.map_or(0.0, |d| -cell_error(d, lo, hi, label_of(s))),
                flips: 0,
            })
        })
        .collect();
    // g[c][s][r]: best cost of cells c.. given cell c has label s and at
    // most r flips remain.
    let flip = Cost { flips: 1, ..Cost::ZERO };
    let mut g = vec![[vec![Cost::ZERO; level + 1], vec![Cost::ZERO; level + 1]]; k];
    for c in (0..k).rev() {
        for s in 0..2 {
            for r in 0..=level {
                let rest = if c + 1 == k {
                    Cost::ZERO
                } else {
                    let stay = g[c + 1][s][r];
                    if r > 0 {
                        let sw = g[c + 1][1 - s][r - 1].plus(flip);
                        if sw.cmp(&stay).is_lt() { sw } else { stay }
                    } else {
                        stay
                    }
                };
                g[c][s][r] = cost[c][s].plus(rest);
            }
        }
    }
    let starts: Vec<usize> = match pinned {
        Some(l) => vec![if l == Label::Positive { 0 } else { 1 }],
        None => vec![0, 1],
    };
    let mut best: Option<(Cost, Vec<f64>, usize)> = None;
    for s0 in starts {
        let mut bounds = Vec::new();
        let (mut s, mut r) = (s0, level);
        for c in 0..k - 1 {
            if r > 0 {
                let sw = g[c + 1][1 - s][r - 1].plus(flip);
                if sw.cmp(&g[c + 1][s][r]).is_le() {
                    bounds.push(cuts[c]);
                    s = 1 - s;
                    r -= 1;
                }
            }
        }
        let total = g[0][s0][level];
        let better = match &best {
            None => true,
            Some((bc, bb, _)) => total
                .cmp(bc)
                .then_with(|| lex_boundaries(&bounds, bb))
                .is_lt(),
        };
        if better {
            best = Some((total, bounds, s0));
        }
    }
    let (_, bounds, s0) = best.expect("at least one start label");
    BoundaryHypothesis::new(bounds, label_of(s0)).expect("cuts are sorted and distinct")
}

fn finite_minimizer(
    primary: &Distribution,
    secondary: Option<&Distribution>,
    members: &[BoundaryHypothesis],
) -> Result<BoundaryHypothesis> {
    let mut best: Option<(Cost, &BoundaryHypothesis)> = None;
    for m in members {
        let h = Hypothesis::Boundary(m.clone());
        let c = Cost {
            primary: primary.risk(&h)?,
            secondary: match secondary {
                Some(d) => -d.risk(&h)?,
                None => 0.0,
            },
            flips: m.boundary_count(),
        };
        let better = match &best {
            None => true,
            Some((bc, bm)) => c.cmp(bc).then_with(|| tie_break(m, bm)).is_lt(),
        };
        if better {
            best = Some((c, m));
        }
    }
    best.map(|(_, m)| m.clone()).ok_or(Error::EmptyGrid)
}

fn atom_error(d: &Distribution, x: f64, label: Label) -> Result<f64> {
    match d {
        Distribution::Discrete(dd) => Ok(dd
            .atoms()
            .iter()
            .find(|a| a.x == x)
            .map_or(0.0, |a| a.mass * a.label.error_of(label))),
        Distribution::Piecewise(_) => Err(Error::OffSupport(x)),
    }
}

fn tabular_minimizer(
    primary: &Distribution,
    secondary: Option<&Distribution>,
    support: &[f64],
) -> Result<TabularHypothesis> {
    let mut labels = Vec::with_capacity(support.len());
    for (i, &x) in support.iter().enumerate() {
        if i == 0 {
            labels.push(Label::Positive);
            continue;
        }
        let cost = |l: Label| -> Result<Cost> {
            Ok(Cost {
                primary: atom_error(primary, x, l)?,
                secondary: match secondary {
                    Some(d) => -atom_error(d, x, l)?,
                    None => 0.0,
                },
                flips: 0,
            })
        };
        let (p, n) = (cost(Label::Positive)?, cost(Label::Negative)?);
        labels.push(if n.cmp(&p).is_lt() { Label::Negative } else { Label::Positive });
    }
    TabularHypothesis::new(support.to_vec(), labels)
}

/// Exact risk minimizer over level `level` under `which`.
///
/// Among exact source minimizers the one with the largest target risk is
/// returned; remaining ties go to fewer boundaries, then lexicographically
/// smaller boundaries, then a leading `+1`.
pub fn level_risk_minimizer(inst: &TransferInstance, which: Which, level: usize) -> Result<Hypothesis> {
    inst.hierarchy.check_level(level)?;
    let primary = inst.distribution(which);
    let secondary = match which {
        Which::P => Some(&inst.target),
        Which::Q => None,
    };
    match &inst.hierarchy.class {
        ClassKind::Boundary { first_sign } => {
            let cuts = cut_points(&[&inst.source, &inst.target]);
            Ok(boundary_minimizer(primary, secondary, &cuts, level, *first_sign).into())
        }
        ClassKind::Finite { members } => {
            let m = &members[level - inst.hierarchy.min_level];
            Ok(finite_minimizer(primary, secondary, m)?.into())
        }
        ClassKind::Tabular { support } => Ok(tabular_minimizer(primary, secondary, support)?.into()),
    }
}

/// Minimizers at every level, ascending.
pub fn level_minimizers(inst: &TransferInstance, which: Which) -> Result<Vec<(usize, Hypothesis)>> {
    inst.hierarchy
        .levels()
        .map(|l| Ok((l, level_risk_minimizer(inst, which, l)?)))
        .collect()
}

/// `R(h) - inf_{h' ∈ H_{L_max}} R(h')` under `which`.
pub fn excess_risk(inst: &TransferInstance, which: Which, h: &Hypothesis) -> Result<f64> {
    let best = level_risk_minimizer(inst, which, inst.hierarchy.max_level)?;
    inst.distribution(which).risk_difference(h, &best)
}

/// Smallest level whose minimizer attains the global minimum risk.
pub fn optimal_level(inst: &TransferInstance, which: Which) -> Result<usize> {
    let mins = level_minimizers(inst, which)?;
    let d = inst.distribution(which);
    let top = &mins.last().expect("nonempty hierarchy").1;
    for (l, h) in &mins {
        if d.risk_difference(h, top)? <= RISK_TOL {
            return Ok(*l);
        }
    }
    Ok(inst.hierarchy.max_level)
}

/// Estimates `R(h)` from `n` fresh draws; returns the mean and its
/// standard error.
pub fn monte_carlo_risk(d: &Distribution, h: &Hypothesis, n: usize, seed: u64) -> Result<(f64, f64)> {
    let s = d.sample(n, seed, SampleSource::P);
    let mut wrong = 0usize;
    for (x, y) in s.iter() {
        if h.evaluate(x)? != y {
            wrong += 1;
        }
    }
    let p = wrong as f64 / n as f64;
    Ok((p, (p * (1.0 - p) / n as f64).sqrt()))
}

/// Resolution of hypothesis grids used by the sup-ratio estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Positions per boundary slot in single-slot sweeps.
    pub resolution: usize,
    /// Positions for the joint sweep at levels ≤ 2.
    pub joint_resolution: usize,
    /// Positions for the joint sweep at level 3.
    pub joint_resolution_deep: usize,
    /// Adds geometric offsets `10^-10 .. 10^-1` around every breakpoint
    /// and minimizer boundary.
    pub ladder: bool,
    /// Coefficients above this cap do not qualify a candidate exponent.
    pub max_coefficient: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            resolution: 10_000,
            joint_resolution: 100,
            joint_resolution_deep: 24,
            ladder: true,
            max_coefficient: None,
        }
    }
}

impl GridSpec {
    /// A lighter grid for quick checks.
    pub fn coarse() -> Self {
        GridSpec {
            resolution: 1_000,
            joint_resolution: 40,
            joint_resolution_deep: 12,
            ..GridSpec::default()
        }
    }
}

struct GridPoint {
    h: Hypothesis,
    /// Built from a ladder offset below `10^-6`.
    fine: bool,
}

fn ladder_offsets() -> Vec<f64> {
    (0..=18).map(|k| 10f64.powf(-10.0 + 0.5 * k as f64)).collect()
}

fn positions(spec: &GridSpec, cuts: &[f64], anchors: &[f64]) -> Vec<(f64, bool)> {
    let (lo, hi) = match (cuts.first(), cuts.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 1.0, a + 1.0),
        _ => (0.0, 1.0),
    };
    let n = spec.resolution.max(2);
    let mut out: Vec<(f64, bool)> = (0..n)
        .map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64, false))
        .collect();
    out.extend(cuts.iter().map(|&c| (c, false)));
    if spec.ladder {
        for &a in cuts.iter().chain(anchors) {
            for t in ladder_offsets() {
                out.push((a - t, t < 1e-6));
                out.push((a + t, t < 1e-6));
            }
        }
    }
    out
}

fn uniform_positions(cuts: &[f64], n: usize) -> Vec<f64> {
    let (lo, hi) = match (cuts.first(), cuts.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        _ => (0.0, 1.0),
    };
    let n = n.max(2);
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn hypothesis_grid(
    inst: &TransferInstance,
    level: usize,
    center: &Hypothesis,
    spec: &GridSpec,
) -> Result<Vec<GridPoint>> {
    let coarse = |h: Hypothesis| GridPoint { h, fine: false };
    match &inst.hierarchy.class {
        ClassKind::Finite { members } => Ok(members[level - inst.hierarchy.min_level]
            .iter()
            .cloned()
            .map(|m| coarse(m.into()))
            .collect()),
        ClassKind::Tabular { support } => {
            if support.len() > TABULAR_CAP {
                return Err(Error::OracleCap { n: support.len(), cap: TABULAR_CAP });
            }
            let free = support.len() - 1;
            (0..1usize << free)
                .map(|mask| {
                    let mut labels = vec![Label::Positive];
                    labels.extend((0..free).map(|i| {
                        if mask >> i & 1 == 1 { Label::Negative } else { Label::Positive }
                    }));
                    Ok(coarse(TabularHypothesis::new(support.clone(), labels)?.into()))
                })
                .collect()
        }
        ClassKind::Boundary { first_sign } => {
            let center = center.as_boundary().ok_or(Error::HypothesisKind)?;
            let cuts = cut_points(&[&inst.source, &inst.target]);
            let signs: Vec<Label> = match first_sign {
                Some(s) => vec![*s],
                None => vec![Label::Positive, Label::Negative],
            };
            let mut out = Vec::new();
            for &s in &signs {
                out.push(coarse(BoundaryHypothesis::constant(s).into()));
            }
            let pos = positions(spec, &cuts, center.boundaries());
            let base = center.boundaries();
            for j in 0..base.len() {
                for &(x, fine) in &pos {
                    let mut b = base.to_vec();
                    b[j] = x;
                    if let Ok(h) = BoundaryHypothesis::new(b, center.first_sign()) {
                        out.push(GridPoint { h: h.into(), fine });
                    }
                }
            }
            if base.len() < level {
                for &(x, fine) in &pos {
                    if base.contains(&x) {
                        continue;
                    }
                    let mut b = base.to_vec();
                    b.push(x);
                    b.sort_by(f64::total_cmp);
                    if let Ok(h) = BoundaryHypothesis::new(b, center.first_sign()) {
                        out.push(GridPoint { h: h.into(), fine });
                    }
                }
            }
            let joint = match level {
                1 | 2 => spec.joint_resolution,
                3 => spec.joint_resolution_deep,
                _ => 0,
            };
            if joint > 0 {
                let grid = uniform_positions(&cuts, joint);
                for k in 1..=level {
                    for combo in grid.iter().copied().combinations(k) {
                        for &s in &signs {
                            if let Ok(h) = BoundaryHypothesis::new(combo.clone(), s) {
                                out.push(coarse(h.into()));
                            }
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Per-candidate outcome of [`estimate_transfer_exponent`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateDiagnostic {
    pub rho: f64,
    /// Sup ratio over the full grid; infinite when some hypothesis has
    /// zero source excess but positive target excess.
    pub coefficient: f64,
    /// Sup ratio without the finest ladder offsets.
    pub coarse_coefficient: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferExponentEstimate {
    pub level: usize,
    pub rho: f64,
    pub coefficient: f64,
    pub witness: Hypothesis,
    pub grid_size: usize,
    pub grid: GridSpec,
    pub candidates: Vec<CandidateDiagnostic>,
}

struct ExcessPair {
    e_p: f64,
    e_q: f64,
    fine: bool,
}

fn sup_ratio<'a>(
    pairs: impl Iterator<Item = (usize, &'a ExcessPair)>,
    num: impl Fn(&ExcessPair) -> f64,
    den: impl Fn(&ExcessPair) -> f64,
    power: f64,
) -> (f64, Option<usize>) {
    let mut best = (0.0f64, None);
    for (i, e) in pairs {
        let (a, b) = (num(e), den(e));
        if a < DEGENERATE && b < DEGENERATE {
            continue;
        }
        let r = if b <= 0.0 { f64::INFINITY } else { a / b.powf(power) };
        if r > best.0 || best.1.is_none() && r >= best.0 {
            best = (r, Some(i));
        }
    }
    best
}

fn transfer_pairs(inst: &TransferInstance, level: usize, spec: &GridSpec) -> Result<(Hypothesis, Vec<GridPoint>, Vec<ExcessPair>)> {
    let h_star = level_risk_minimizer(inst, Which::P, level)?;
    let grid = hypothesis_grid(inst, level, &h_star, spec)?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let pairs = grid
        .iter()
        .map(|g| {
            Ok(ExcessPair {
                e_p: inst.source.risk_difference(&g.h, &h_star)?,
                e_q: inst.target.risk_difference(&g.h, &h_star)?,
                fine: g.fine,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((h_star, grid, pairs))
}

/// Sup over the grid of `E_Q(h, h*_{P,i}) / E_P(h, h*_{P,i})^(1/ρ)` for
/// each candidate `ρ`. The smallest candidate whose sup is finite, stable
/// under grid refinement and within `spec.max_coefficient` is reported.
pub fn estimate_transfer_exponent(
    inst: &TransferInstance,
    level: usize,
    candidate_rhos: &[f64],
    spec: &GridSpec,
) -> Result<TransferExponentEstimate> {
    if candidate_rhos.is_empty() {
        return Err(Error::InvalidParameter("no candidate exponents".into()));
    }
    let (h_star, grid, pairs) = transfer_pairs(inst, level, spec)?;
    let mut rhos = candidate_rhos.to_vec();
    rhos.sort_by(f64::total_cmp);
    let mut candidates = Vec::with_capacity(rhos.len());
    let mut chosen: Option<(f64, f64, Option<usize>)> = None;
    for rho in rhos {
        let (full, idx) = sup_ratio(pairs.iter().enumerate(), |e| e.e_q, |e| e.e_p, 1.0 / rho);
        let (coarse, _) = sup_ratio(
            pairs.iter().enumerate().filter(|(_, e)| !e.fine),
            |e| e.e_q,
            |e| e.e_p,
            1.0 / rho,
        );
        let stable = full.is_finite() && full <= 1.5 * coarse.max(DEGENERATE);
        candidates.push(CandidateDiagnostic {
            rho,
            coefficient: full,
            coarse_coefficient: coarse,
            stable,
        });
        let capped = spec.max_coefficient.is_none_or(|cap| full <= cap);
        if chosen.is_none() && stable && capped {
            chosen = Some((rho, full, idx));
        }
    }
    let (rho, coefficient, idx) = chosen.ok_or(Error::NoStableExponent)?;
    Ok(TransferExponentEstimate {
        level,
        rho,
        coefficient,
        witness: idx.map_or(h_star, |i| grid[i].h.clone()),
        grid_size: grid.len(),
        grid: *spec,
        candidates,
    })
}

/// Sup ratio at a single exponent together with its witness.
pub fn transfer_coefficient(
    inst: &TransferInstance,
    level: usize,
    rho: f64,
    spec: &GridSpec,
) -> Result<(f64, Hypothesis)> {
    let (h_star, grid, pairs) = transfer_pairs(inst, level, spec)?;
    let (c, idx) = sup_ratio(pairs.iter().enumerate(), |e| e.e_q, |e| e.e_p, 1.0 / rho);
    Ok((c, idx.map_or(h_star, |i| grid[i].h.clone())))
}

/// Result of [`verify_bcc`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BccCheck {
    pub level: usize,
    pub which: Which,
    pub beta: f64,
    /// Sup of `Pr[h ≠ h*] / E(h)^β` over the grid.
    pub sup_ratio: f64,
    pub witness: Option<Hypothesis>,
    pub grid_size: usize,
}

impl BccCheck {
    pub fn holds(&self) -> bool {
        self.sup_ratio.is_finite()
    }
}

/// Checks the noise condition `Pr[h ≠ h*] ≤ C_β·E(h)^β` at one level,
/// with `h*` the level's risk minimizer and `E` the excess over it.
pub fn verify_bcc(inst: &TransferInstance, which: Which, level: usize, beta: f64, spec: &GridSpec) -> Result<BccCheck> {
    let d = inst.distribution(which);
    let h_star = level_risk_minimizer(inst, which, level)?;
    let grid = hypothesis_grid(inst, level, &h_star, spec)?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let pairs = grid
        .iter()
        .map(|g| {
            Ok(ExcessPair {
                e_p: d.disagreement(&g.h, &h_star)?,
                e_q: d.risk_difference(&g.h, &h_star)?,
                fine: g.fine,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (sup, idx) = if beta == 0.0 {
        let mut best = (0.0f64, None);
        for (i, e) in pairs.iter().enumerate() {
            if e.e_p > best.0 {
                best = (e.e_p, Some(i));
            }
        }
        best
    } else {
        sup_ratio(pairs.iter().enumerate(), |e| e.e_p, |e| e.e_q, beta)
    };
    Ok(BccCheck {
        level,
        which,
        beta,
        sup_ratio: sup,
        witness: idx.map(|i| grid[i].h.clone()),
        grid_size: grid.len(),
    })
}

/// Fills in missing transfer coefficients (at the recorded exponents) and
/// missing optimal-level indices.
pub fn complete_truth(inst: &mut TransferInstance, spec: &GridSpec) -> Result<()> {
    let levels: Vec<usize> = inst.hierarchy.levels().collect();
    for level in levels {
        let todo: Vec<f64> = match inst.truth_at(level) {
            Some(t) => t
                .exponents
                .iter()
                .filter(|e| e.coefficient.is_none())
                .map(|e| e.rho)
                .collect(),
            None => continue,
        };
        for rho in todo {
            let (c, _) = transfer_coefficient(inst, level, rho, spec)?;
            let t = inst.truth_at_mut(level).expect("checked above");
            for e in t.exponents.iter_mut().filter(|e| e.rho == rho) {
                e.coefficient = Some(c);
            }
        }
    }
    if inst.i_star_p.is_none() {
        inst.i_star_p = Some(optimal_level(inst, Which::P)?);
    }
    if inst.i_star_q.is_none() {
        inst.i_star_q = Some(optimal_level(inst, Which::Q)?);
    }
    Ok(())
}

/// Constants of the rate functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub delta: f64,
    pub c0: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig { delta: 0.1, c0: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRate {
    pub level: usize,
    pub d: usize,
    pub delta_i: f64,
    /// The exponent pair minimizing `φ♯` at this level.
    pub rho: f64,
    pub coefficient: f64,
    pub excess_q: f64,
    pub beta_p: f64,
    pub beta_q: f64,
    pub phi_sharp: f64,
    pub phi_flat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    pub n_p: usize,
    pub n_q: usize,
    pub config: RateConfig,
    pub i_star_p: Option<usize>,
    pub i_star_q: usize,
    /// Infimum of `β_{Q,i}` over `i ≥ i*_Q`.
    pub beta_q: f64,
    pub beta_q_at_i_star_q: f64,
    pub target_arm_sharp: f64,
    pub target_arm_flat: f64,
    pub levels: Vec<LevelRate>,
    pub i_sharp: usize,
    pub i_flat: usize,
}

impl RateProfile {
    pub fn level(&self, level: usize) -> Option<&LevelRate> {
        self.levels.iter().find(|l| l.level == level)
    }

    pub fn min_phi_sharp(&self) -> f64 {
        self.levels.iter().map(|l| l.phi_sharp).fold(f64::INFINITY, f64::min)
    }

    pub fn min_phi_flat(&self) -> f64 {
        self.levels.iter().map(|l| l.phi_flat).fold(f64::INFINITY, f64::min)
    }

    pub fn max_phi_flat(&self) -> f64 {
        self.levels.iter().map(|l| l.phi_flat).fold(0.0, f64::max)
    }

    /// Per-level table as comma-separated text with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,d,delta_i,rho,coefficient,excess_q,beta_p,beta_q,phi_sharp,phi_flat\n");
        for l in &self.levels {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                l.level, l.d, l.delta_i, l.rho, l.coefficient, l.excess_q, l.beta_p, l.beta_q, l.phi_sharp, l.phi_flat
            ));
        }
        out
    }
}

fn source_arm_sharp(c0: f64, e: &ExponentTruth, coefficient: f64, d: usize, delta_i: f64, beta_p: f64, n_p: usize) -> f64 {
    if n_p == 0 {
        return f64::INFINITY;
    }
    let n = n_p as f64;
    c0 * coefficient * (d as f64 * (n / delta_i).ln() / n).powf(1.0 / ((2.0 - beta_p) * e.rho))
}

fn source_arm_flat(e: &ExponentTruth, coefficient: f64, d: usize, beta_p: f64, n_p: usize) -> f64 {
    if n_p == 0 {
        return f64::INFINITY;
    }
    coefficient * (d as f64 / n_p as f64).powf(1.0 / ((2.0 - beta_p) * e.rho))
}

fn argmin(values: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (l, v) in values {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((l, v));
        }
    }
    best.map_or(0, |b| b.0)
}

/// `φ♯(i)` and `φ♭(i)` at every level, with `i♯`, `i♭` and the inputs
/// that produced them.
pub fn rate_profile(inst: &TransferInstance, n_p: usize, n_q: usize, cfg: &RateConfig) -> Result<RateProfile> {
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta {} outside (0, 1)", cfg.delta)));
    }
    let h = &inst.hierarchy;
    let missing: Vec<usize> = h
        .levels()
        .filter(|&l| {
            inst.truth_at(l).is_none_or(|t| {
                t.exponents.is_empty()
                    || t.exponents.iter().any(|e| e.coefficient.is_none())
                    || t.excess_q_of_source_minimizer.is_none()
                    || t.beta_p.is_none()
                    || t.beta_q.is_none()
            })
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingTruth { levels: missing });
    }
    let i_star_q = inst.i_star_q.ok_or(Error::MissingTruth { levels: vec![] })?;
    let beta_q_of = |l: usize| inst.truth_at(l).and_then(|t| t.beta_q).expect("checked above");
    let beta_q = (i_star_q..=h.max_level).map(beta_q_of).fold(f64::INFINITY, f64::min);
    let beta_q_at = beta_q_of(i_star_q);
    let d_q = h.vc_dimension(i_star_q)?;
    let (target_sharp, target_flat) = if n_q == 0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let n = n_q as f64;
        let dq = level_delta(cfg.delta, i_star_q, h.min_level);
        (
            cfg.c0 * (d_q as f64 * (n / dq).ln() / n).powf(1.0 / (2.0 - beta_q)),
            (d_q as f64 / n).powf(1.0 / (2.0 - beta_q)),
        )
    };
    let mut levels = Vec::new();
    for l in h.levels() {
        let t = inst.truth_at(l).expect("checked above");
        let d = h.vc_dimension(l)?;
        let delta_i = level_delta(cfg.delta, l, h.min_level);
        let beta_p = t.beta_p.expect("checked above");
        let excess_q = t.excess_q_of_source_minimizer.expect("checked above");
        let mut best_sharp: Option<(f64, &ExponentTruth)> = None;
        let mut best_flat = f64::INFINITY;
        for e in &t.exponents {
            let c = e.coefficient.expect("checked above");
            let s = excess_q + source_arm_sharp(cfg.c0, e, c, d, delta_i, beta_p, n_p);
            if best_sharp.is_none_or(|(b, _)| s < b) {
                best_sharp = Some((s, e));
            }
            best_flat = best_flat.min(source_arm_flat(e, c, d, beta_p, n_p) + excess_q);
        }
        let (s, e) = best_sharp.expect("nonempty exponents");
        levels.push(LevelRate {
            level: l,
            d,
            delta_i,
            rho: e.rho,
            coefficient: e.coefficient.expect("checked above"),
            excess_q,
            beta_p,
            beta_q: t.beta_q.expect("checked above"),
            phi_sharp: s.min(target_sharp),
            phi_flat: best_flat.min(target_flat),
        });
    }
    let i_sharp = argmin(levels.iter().map(|r| (r.level, r.phi_sharp)));
    let i_flat = argmin(levels.iter().map(|r| (r.level, r.phi_flat)));
    Ok(RateProfile {
        n_p,
        n_q,
        config: *cfg,
        i_star_p: inst.i_star_p,
        i_star_q,
        beta_q,
        beta_q_at_i_star_q: beta_q_at,
        target_arm_sharp: target_sharp,
        target_arm_flat: target_flat,
        levels,
        i_sharp,
        i_flat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::*;
    use crate::hypothesis::HierarchySpec;

    fn b(bounds: &[f64], s: Label) -> Hypothesis {
        BoundaryHypothesis::new(bounds.to_vec(), s).unwrap().into()
    }

    #[test]
    fn threshold_minimizers_are_the_first_levels_anchors() {
        for rhos in [vec![1.0, 2.0, 4.0], vec![1.0, 1.0, 2.0], vec![2.0, 2.0, 2.0]] {
            let inst = build_threshold_nn(&rhos, 3).unwrap();
            let v = [0.25, 0.5, 0.75];
            for i in 1..=3 {
                let h = level_risk_minimizer(&inst, Which::P, i).unwrap();
                assert_eq!(h, b(&v[..i], Label::Positive), "level {i}");
                let e = inst.target.risk_difference(&h, &b(&v, Label::Positive)).unwrap();
                let claimed = inst.truth_at(i).unwrap().excess_q_of_source_minimizer.unwrap();
                assert!((e - claimed).abs() < 1e-12, "{e} vs {claimed}");
            }
        }
    }

    #[test]
    fn gap_minimizer_convention() {
        let fam = build_gap_family(2.0, 1.0, 1024, 5).unwrap();
        let [h1, h1p, h2, h2p] = gap_hypotheses().map(Hypothesis::from);
        for inst in &fam {
            let m1 = level_risk_minimizer(inst, Which::P, 1).unwrap();
            let m2 = level_risk_minimizer(inst, Which::P, 2).unwrap();
            if inst.sigma[0] > 0 {
                assert_eq!(m1, h1p);
                assert_eq!(m2, h2p);
            } else {
                assert_eq!(m1, h1);
                assert_eq!(m2, h2);
            }
            assert_eq!(optimal_level(inst, Which::P).unwrap(), 2);
            assert_eq!(optimal_level(inst, Which::Q).unwrap(), 1);
            for l in 1..=2 {
                let h = level_risk_minimizer(inst, Which::P, l).unwrap();
                assert!(excess_risk(inst, Which::Q, &h).unwrap().abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gap_excess_of_h1_under_plus_plus() {
        let inst = &build_gap_family(2.0, 1.0, 1024, 5).unwrap()[0];
        let [h1, ..] = gap_hypotheses().map(Hypothesis::from);
        let a = gap_inner_mass(1024, 2.0);
        let b = gap_inner_mass(1024, 1.0);
        // Both err on L_in; h_1 also errs on R_in.
        let e = excess_risk(inst, Which::Q, &h1).unwrap();
        assert!((e - b).abs() < 1e-15, "{e}");
        assert!(a > b);
        let (mc, se) = monte_carlo_risk(&inst.target, &h1, 100_000, 3).unwrap();
        let exact = inst.target.risk(&h1).unwrap();
        assert!((mc - exact).abs() <= 4.0 * se.max(1e-6));
    }

    #[test]
    fn extended_gap_optimal_levels() {
        for inst in build_extended_gap_family(2.0, 1.0, 1024, 5).unwrap() {
            assert_eq!(optimal_level(&inst, Which::P).unwrap(), 2, "{}", inst.tag());
            assert_eq!(optimal_level(&inst, Which::Q).unwrap(), 1, "{}", inst.tag());
            for l in 1..=2 {
                let h = level_risk_minimizer(&inst, Which::P, l).unwrap();
                let e = excess_risk(&inst, Which::Q, &h).unwrap();
                assert!(e.abs() < 1e-15, "{} level {l}: {e}", inst.tag());
            }
        }
    }

    #[test]
    fn pinned_class_minimizer() {
        let inst = &build_extended_gap_family(2.0, 1.0, 1024, 5).unwrap()[0];
        let h = level_risk_minimizer(inst, Which::P, 1).unwrap();
        assert_eq!(h, b(&[5.0 / 9.0], Label::Negative));
    }

    #[test]
    fn two_point_minimizers() {
        let fam = build_two_point_family(0.01, 50).unwrap();
        let [h1, _, h2, _] = two_point_hypotheses().map(Hypothesis::from);
        for inst in &fam {
            assert_eq!(level_risk_minimizer(inst, Which::P, 1).unwrap(), h1);
            assert_eq!(level_risk_minimizer(inst, Which::P, 2).unwrap(), h2);
            for t in &inst.truth {
                let h = level_risk_minimizer(inst, Which::P, t.level).unwrap();
                let e = excess_risk(inst, Which::Q, &h).unwrap();
                assert!((e - t.excess_q_of_source_minimizer.unwrap()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn balanced_level_zero_is_deterministic() {
        let d: Distribution = crate::distribution::PiecewiseDistribution::new(vec![
            crate::distribution::Segment::uniform(0.0, 1.0, 1.0, crate::distribution::LabelLaw::Bernoulli(0.5)),
        ])
        .unwrap()
        .into();
        let inst = TransferInstance {
            family: FamilySpec::ThresholdNn { rhos: vec![1.0], max_level: None },
            sigma: vec![],
            n_p: 0,
            n_q: 0,
            source: d.clone(),
            target: d,
            hierarchy: HierarchySpec::boundary(1),
            truth: vec![],
            i_star_p: None,
            i_star_q: None,
        };
        let h = level_risk_minimizer(&inst, Which::P, 0).unwrap();
        assert_eq!(h, b(&[], Label::Positive));
        let other = b(&[], Label::Negative);
        assert_eq!(excess_risk(&inst, Which::P, &other).unwrap(), 0.0);
    }

    #[test]
    fn minimizer_beats_random_hypotheses() {
        let inst = build_threshold_nn(&[1.0, 2.0, 4.0], 3).unwrap();
        let mut x = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64
        };
        for level in 1..=3 {
            for which in [Which::P, Which::Q] {
                let best = level_risk_minimizer(&inst, which, level).unwrap();
                let d = inst.distribution(which);
                let r = d.risk(&best).unwrap();
                for _ in 0..1000 {
                    let mut bs: Vec<f64> = (0..level).map(|_| next()).collect();
                    bs.sort_by(f64::total_cmp);
                    let s = if next() < 0.5 { Label::Positive } else { Label::Negative };
                    if let Ok(h) = BoundaryHypothesis::new(bs, s) {
                        assert!(d.risk(&h.into()).unwrap() >= r - 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn transfer_exponent_identity() {
        let mut inst = build_threshold_nn(&[1.0, 2.0], 2).unwrap();
        inst.target = inst.source.clone();
        let est = estimate_transfer_exponent(&inst, 2, &[1.0, 2.0], &GridSpec::coarse()).unwrap();
        assert_eq!(est.rho, 1.0);
        assert!((est.coefficient - 1.0).abs() < 1e-9, "{}", est.coefficient);
    }

    #[test]
    fn gap_transfer_exponents_have_unit_coefficient() {
        for inst in build_gap_family(4.0, 2.0, 1 << 15, 1).unwrap() {
            for t in &inst.truth {
                let rho = t.exponents[0].rho;
                let (c, _) = transfer_coefficient(&inst, t.level, rho, &GridSpec::coarse()).unwrap();
                assert!((0.9..=1.0 + 1e-6).contains(&c), "{} level {}: {c}", inst.tag(), t.level);
            }
        }
    }

    #[test]
    fn threshold_exponent_below_truth_diverges() {
        let inst = build_threshold_nn(&[1.0, 2.0, 4.0], 3).unwrap();
        for i in 1..=3 {
            let rho = inst.truth_at(i).unwrap().exponents[0].rho;
            let est = estimate_transfer_exponent(&inst, i, &[rho - 0.25, rho], &GridSpec::coarse());
            let est = est.unwrap_or_else(|e| panic!("level {i}: {e} {:?}", transfer_coefficient(&inst, i, rho, &GridSpec::coarse())));
            assert_eq!(est.rho, rho, "level {i}");
            assert!(est.candidates[0].coefficient > 100.0, "level {i}: {:?}", est.candidates[0]);
        }
    }

    #[test]
    fn bcc_on_noiseless_instances() {
        let inst = build_threshold_nn(&[1.0, 2.0, 4.0], 3).unwrap();
        let chk = verify_bcc(&inst, Which::Q, 3, 1.0, &GridSpec::coarse()).unwrap();
        assert!(chk.holds());
        assert!((chk.sup_ratio - 1.0).abs() < 1e-9);
        let chk0 = verify_bcc(&inst, Which::P, 2, 0.0, &GridSpec::coarse()).unwrap();
        assert!(chk0.sup_ratio <= 1.0);
        let gap = &build_gap_family(2.0, 1.0, 1024, 5).unwrap()[0];
        let q2 = verify_bcc(gap, Which::Q, 2, 1.0, &GridSpec::coarse()).unwrap();
        assert!(!q2.holds(), "two target minimizers at level 2");
    }

    #[test]
    fn complete_truth_fills_coefficients() {
        let mut inst = build_threshold_nn(&[1.0, 2.0], 2).unwrap();
        assert!(matches!(
            rate_profile(&inst, 100, 10, &RateConfig::default()),
            Err(Error::MissingTruth { levels }) if levels == vec![1, 2]
        ));
        complete_truth(&mut inst, &GridSpec::coarse()).unwrap();
        let p = rate_profile(&inst, 100, 10, &RateConfig::default()).unwrap();
        assert!(p.levels.iter().all(|l| l.phi_sharp >= 0.0 && l.phi_sharp <= p.target_arm_sharp));
    }

    #[test]
    fn gap_flat_rates() {
        for (ra, rb, n_p, n_q) in [(2.0, 1.0, 1024, 5), (4.0, 2.0, 1 << 15, 1)] {
            for inst in build_gap_family(ra, rb, n_p, n_q).unwrap() {
                let p = rate_profile(&inst, n_p, n_q, &RateConfig::default()).unwrap();
                let n = n_p as f64;
                assert_eq!(p.min_phi_flat(), (1.0 / n).powf(1.0 / rb));
                assert_eq!(p.max_phi_flat(), (1.0 / n).powf(1.0 / ra));
            }
        }
    }

    #[test]
    fn sharp_rate_monotone_in_sample_sizes() {
        let mut inst = build_threshold_nn(&[1.0, 2.0, 4.0], 3).unwrap();
        complete_truth(&mut inst, &GridSpec::coarse()).unwrap();
        let cfg = RateConfig::default();
        let base = rate_profile(&inst, 1000, 100, &cfg).unwrap();
        let more_p = rate_profile(&inst, 4000, 100, &cfg).unwrap();
        let more_q = rate_profile(&inst, 1000, 400, &cfg).unwrap();
        for ((a, b), c) in base.levels.iter().zip(&more_p.levels).zip(&more_q.levels) {
            assert!(b.phi_sharp <= a.phi_sharp && c.phi_sharp <= a.phi_sharp);
        }
    }

    #[test]
    fn rate_ties_go_to_the_smallest_level() {
        let inst = &build_gap_family(2.0, 1.0, 1024, 5).unwrap()[0];
        let p = rate_profile(inst, 1024, 0, &RateConfig::default()).unwrap();
        assert!(p.target_arm_sharp.is_infinite());
        let p = rate_profile(inst, 0, 0, &RateConfig::default()).unwrap();
        assert_eq!(p.i_sharp, 1);
    }

    #[test]
    fn fixed_class_truth_matches_analysis() {
        let params = FixedClassParams {
            d: 9,
            beta_p: 0.5,
            beta_q: 0.5,
            rho: 1.0,
            alpha: 0.2,
            n_p: 100,
            n_q: 100,
            c2: 0.25,
        };
        for t in 0..4 {
            let inst = build_fixed_class(&params, &fixed_class_sigma(9, t)).unwrap();
            let h = level_risk_minimizer(&inst, Which::P, 1).unwrap();
            let e = excess_risk(&inst, Which::Q, &h).unwrap();
            let truth = inst.truth_at(1).unwrap();
            assert!((e - truth.excess_q_of_source_minimizer.unwrap()).abs() < 1e-15);
            assert!(e <= params.epsilon2() / 2.0 * (1.0 + 1e-12));
            let (c, _) = transfer_coefficient(&inst, 1, 1.0, &GridSpec::default()).unwrap();
            let claimed = truth.exponents[0].coefficient.unwrap();
            assert!(c <= claimed * (1.0 + 1e-12), "{c} vs {claimed}");
            let bcc = verify_bcc(&inst, Which::Q, 1, 0.5, &GridSpec::default()).unwrap();
            assert!(bcc.sup_ratio <= 2f64.powf(0.5) * (1.0 + 1e-12), "{}", bcc.sup_ratio);
        }
    }
}
