//! Exact empirical risk minimization over the hierarchy levels.
//!
//! Points with equal `x` are grouped, since no hypothesis can separate them.
//! Over a grouped sample a boundary hypothesis is just a labeling of the
//! groups, and the best labeling with at most `k` sign changes is found by
//! dynamic programming in `O(groups · k)`.

use serde::{Deserialize, Serialize};

use crate::distribution::LabeledSample;
use crate::error::{Error, Result};
use crate::hypothesis::{
    enumerate_hypotheses, midpoint, BoundaryHypothesis, ClassKind, HierarchySpec, Hypothesis,
    Label, TabularHypothesis,
};

/// Largest sample [`erm_bruteforce`] accepts.
pub const BRUTEFORCE_CAP: usize = 20;

/// All sample points sharing one `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Group {
    pub x: f64,
    pub pos: usize,
    pub neg: usize,
}

impl Group {
    /// Mistakes made by predicting `label` on every point of the group.
    pub fn cost(&self, label: Label) -> usize {
        match label {
            Label::Positive => self.neg,
            Label::Negative => self.pos,
        }
    }

    pub fn size(&self) -> usize {
        self.pos + self.neg
    }
}

pub fn group_sample(sample: &LabeledSample) -> Vec<Group> {
    let mut groups: Vec<Group> = Vec::new();
    for (x, y) in sample.iter() {
        match groups.last_mut() {
            Some(g) if g.x == x => match y {
                Label::Positive => g.pos += 1,
                Label::Negative => g.neg += 1,
            },
            _ => groups.push(Group {
                x,
                pos: usize::from(y == Label::Positive),
                neg: usize::from(y == Label::Negative),
            }),
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmResult {
    pub hypothesis: Hypothesis,
    pub mistakes: usize,
    pub level: usize,
}

impl ErmResult {
    pub fn boundary(&self) -> Option<&BoundaryHypothesis> {
        self.hypothesis.as_boundary()
    }
}

/// Mistakes of `h` on the sample.
pub fn mistakes(h: &Hypothesis, sample: &LabeledSample) -> Result<usize> {
    let mut m = 0;
    for (x, y) in sample.iter() {
        if h.evaluate(x)? != y {
            m += 1;
        }
    }
    Ok(m)
}

/// Fraction of the sample `h` gets wrong; 0 on an empty sample.
pub fn empirical_risk(h: &Hypothesis, sample: &LabeledSample) -> Result<f64> {
    if sample.is_empty() {
        return Ok(0.0);
    }
    Ok(mistakes(h, sample)? as f64 / sample.len() as f64)
}

/// Fraction of sample points on which `h` and `g` disagree.
pub fn empirical_disagreement(h: &Hypothesis, g: &Hypothesis, sample: &LabeledSample) -> Result<f64> {
    if sample.is_empty() {
        return Ok(0.0);
    }
    let mut d = 0usize;
    for &x in sample.xs() {
        if h.evaluate(x)? != g.evaluate(x)? {
            d += 1;
        }
    }
    Ok(d as f64 / sample.len() as f64)
}

/// `Ordering` used to break ties between equally accurate boundary
/// hypotheses: fewer boundaries, then the lexicographically smaller
/// boundary vector, then `+1` as the first sign.
pub fn tie_break(a: &BoundaryHypothesis, b: &BoundaryHypothesis) -> std::cmp::Ordering {
    a.boundary_count()
        .cmp(&b.boundary_count())
        .then_with(|| {
            a.boundaries()
                .iter()
                .zip(b.boundaries())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .then_with(|| b.first_sign().cmp(&a.first_sign()))
}

/// Exact ERM over hypotheses with at most `level` boundaries.
///
/// ```
/// use model_transfer::distribution::LabeledSample;
/// use model_transfer::erm::erm_dp;
/// use model_transfer::hypothesis::Label::{Negative as N, Positive as P};
///
/// let s = LabeledSample::from_pairs(vec![(0.1, P), (0.2, N), (0.3, P)]);
/// assert_eq!(erm_dp(&s, 0).mistakes, 1);
/// assert_eq!(erm_dp(&s, 2).mistakes, 0);
/// ```
pub fn erm_dp(sample: &LabeledSample, level: usize) -> ErmResult {
    let groups = group_sample(sample);
    let (h, m) = boundary_erm(&groups, level, None, None);
    ErmResult {
        hypothesis: h.into(),
        mistakes: m,
        level,
    }
}

/// ERM over boundary hypotheses whose leftmost label is pinned to `first`.
pub fn erm_dp_pinned(sample: &LabeledSample, level: usize, first: Label) -> ErmResult {
    let groups = group_sample(sample);
    let (h, m) = boundary_erm(&groups, level, Some(first), None);
    ErmResult {
        hypothesis: h.into(),
        mistakes: m,
        level,
    }
}

/// [`erm_dp`] with a deliberately broken transition: a sign change across
/// the first gap does not use up the boundary budget. Only useful as a
/// negative control for oracle checks.
#[doc(hidden)]
pub fn erm_dp_faulty(sample: &LabeledSample, level: usize) -> ErmResult {
    let groups = group_sample(sample);
    let (h, m) = boundary_erm(&groups, level, None, Some(0));
    ErmResult {
        hypothesis: h.into(),
        mistakes: m,
        level,
    }
}

/// Position of the boundary used for a sign change before the first
/// group when the first sign is pinned.
pub(crate) fn leading_boundary(groups: &[Group]) -> f64 {
    groups[0].x - 1.0
}

fn sign_index(s: Label) -> usize {
    match s {
        Label::Positive => 0,
        Label::Negative => 1,
    }
}

const SIGNS: [Label; 2] = [Label::Positive, Label::Negative];

/// Core DP. `free_gap` makes one gap's flip cost nothing (fault injection).
pub(crate) fn boundary_erm(
    groups: &[Group],
    level: usize,
    pinned: Option<Label>,
    free_gap: Option<usize>,
) -> (BoundaryHypothesis, usize) {
    let g_count = groups.len();
    if g_count == 0 {
        return (BoundaryHypothesis::constant(pinned.unwrap_or(Label::Positive)), 0);
    }
    let k_max = level;
    const INF: usize = usize::MAX / 4;
    // f[g][s][k]: best cost of groups g.. when group g has sign s and
    // exactly k flips happen across gaps g..g_count-1.
    let idx = |g: usize, s: usize, k: usize| (g * 2 + s) * (k_max + 1) + k;
    let mut f = vec![INF; g_count * 2 * (k_max + 1)];
    for s in 0..2 {
        f[idx(g_count - 1, s, 0)] = groups[g_count - 1].cost(SIGNS[s]);
    }
    for g in (0..g_count - 1).rev() {
        let flip_cost = usize::from(free_gap != Some(g));
        for s in 0..2 {
            let here = groups[g].cost(SIGNS[s]);
            for k in 0..=k_max {
                let stay = f[idx(g + 1, s, k)];
                let flip = if k >= flip_cost {
                    f[idx(g + 1, 1 - s, k - flip_cost)]
                } else {
                    INF
                };
                let best = stay.min(flip);
                if best < INF {
                    f[idx(g, s, k)] = here + best;
                }
            }
        }
    }

    // Starting options: (first_sign, sign of group 0, flips already used).
    let mut starts: Vec<(Label, Label, usize)> = Vec::new();
    match pinned {
        None => {
            starts.push((Label::Positive, Label::Positive, 0));
            starts.push((Label::Negative, Label::Negative, 0));
        }
        Some(s0) => {
            starts.push((s0, s0, 0));
            if k_max >= 1 {
                starts.push((s0, s0.flip(), 1));
            }
        }
    }

    let total = |start: &(Label, Label, usize), k: usize| -> usize {
        let (_, g0, used) = *start;
        if k < used {
            return INF;
        }
        f[idx(0, sign_index(g0), k - used)]
    };
    let best = starts
        .iter()
        .flat_map(|st| (0..=k_max).map(move |k| (st, k)))
        .map(|(st, k)| total(st, k))
        .min()
        .unwrap_or(INF);
    let k_star = (0..=k_max)
        .find(|&k| starts.iter().any(|st| total(st, k) == best))
        .expect("some flip count attains the optimum");

    let mut candidates: Vec<BoundaryHypothesis> = Vec::new();
    for st in &starts {
        if total(st, k_star) != best {
            continue;
        }
        let (first, g0, used) = *st;
        let mut bounds = Vec::with_capacity(k_star);
        if used == 1 {
            bounds.push(leading_boundary(groups));
        }
        let mut s = sign_index(g0);
        let mut remaining = k_star - used;
        let mut spent = 0usize;
        for g in 0..g_count - 1 {
            spent += groups[g].cost(SIGNS[s]);
            let flip_cost = usize::from(free_gap != Some(g));
            let flip_ok = remaining >= flip_cost
                && f[idx(g + 1, 1 - s, remaining - flip_cost)] < INF
                && spent + f[idx(g + 1, 1 - s, remaining - flip_cost)] == best;
            if flip_ok {
                bounds.push(midpoint(groups[g].x, groups[g + 1].x));
                s = 1 - s;
                remaining -= flip_cost;
            } else {
                debug_assert_eq!(spent + f[idx(g + 1, s, remaining)], best);
            }
        }
        candidates.push(
            BoundaryHypothesis::new(bounds, first).expect("midpoints are increasing"),
        );
    }
    candidates.sort_by(tie_break);
    (candidates.swap_remove(0), best)
}

/// Exhaustive ERM over [`enumerate_hypotheses`]; a test oracle for
/// [`erm_dp`].
pub fn erm_bruteforce(sample: &LabeledSample, level: usize) -> Result<ErmResult> {
    if sample.len() > BRUTEFORCE_CAP {
        return Err(Error::OracleCap {
            n: sample.len(),
            cap: BRUTEFORCE_CAP,
        });
    }
    let mut best: Option<(usize, BoundaryHypothesis)> = None;
    for h in enumerate_hypotheses(sample.xs(), level) {
        let m = sample.iter().filter(|&(x, y)| h.evaluate(x) != y).count();
        let better = match &best {
            None => true,
            Some((bm, bh)) => m < *bm || (m == *bm && tie_break(&h, bh).is_lt()),
        };
        if better {
            best = Some((m, h));
        }
    }
    let (m, h) = best.expect("enumeration always yields the constants");
    Ok(ErmResult {
        hypothesis: h.into(),
        mistakes: m,
        level,
    })
}

/// ERM over level `level` of any hierarchy.
pub fn erm(hierarchy: &HierarchySpec, sample: &LabeledSample, level: usize) -> Result<ErmResult> {
    hierarchy.check_level(level)?;
    match &hierarchy.class {
        ClassKind::Boundary { first_sign } => {
            let groups = group_sample(sample);
            let (h, m) = boundary_erm(&groups, level, *first_sign, None);
            Ok(ErmResult {
                hypothesis: h.into(),
                mistakes: m,
                level,
            })
        }
        ClassKind::Finite { members } => {
            let mut best: Option<(usize, &BoundaryHypothesis)> = None;
            for h in &members[level - hierarchy.min_level] {
                let m = sample.iter().filter(|&(x, y)| h.evaluate(x) != y).count();
                let better = match best {
                    None => true,
                    Some((bm, bh)) => m < bm || (m == bm && tie_break(h, bh).is_lt()),
                };
                if better {
                    best = Some((m, h));
                }
            }
            let (m, h) = best.expect("validated finite levels are nonempty");
            Ok(ErmResult {
                hypothesis: h.clone().into(),
                mistakes: m,
                level,
            })
        }
        ClassKind::Tabular { support } => {
            let mut pos = vec![0usize; support.len()];
            let mut neg = vec![0usize; support.len()];
            for (x, y) in sample.iter() {
                let i = support
                    .iter()
                    .position(|&s| s == x)
                    .ok_or(Error::OffSupport(x))?;
                match y {
                    Label::Positive => pos[i] += 1,
                    Label::Negative => neg[i] += 1,
                }
            }
            let labels: Vec<Label> = (0..support.len())
                .map(|i| {
                    if i == 0 || pos[i] >= neg[i] {
                        Label::Positive
                    } else {
                        Label::Negative
                    }
                })
                .collect();
            let m = (0..support.len())
                .map(|i| if labels[i] == Label::Positive { neg[i] } else { pos[i] })
                .sum();
            Ok(ErmResult {
                hypothesis: TabularHypothesis::new(support.clone(), labels)?.into(),
                mistakes: m,
                level,
            })
        }
    }
}
