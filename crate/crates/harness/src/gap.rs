use anyhow::{bail, Result};
use model_transfer::constructions::{event_b_probability, gap_intervals, FamilySpec};
use model_transfer::distribution::LabeledSample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Learner, OracleRule};
use crate::output::{RunRecord, Stats};
use crate::run::{draw, prepare, run_one, Prepared};

/// Per-member results at one `(n_P, n_Q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapMember {
    pub sigma: String,
    pub oracle_level: usize,
    pub adaptive: Stats,
    pub oracle: Stats,
    /// Fraction of replicates with excess at least `tail_threshold`.
    pub adaptive_tail: f64,
    pub oracle_tail: f64,
    pub event_b_empirical: f64,
    pub event_b_analytic: f64,
    /// Standard deviation of the empirical frequency under the analytic law.
    pub event_b_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub n_p: usize,
    pub n_q: usize,
    /// `min_i φ♭`, the oracle's target.
    pub oracle_target: f64,
    /// `max_i φ♭`.
    pub adaptive_floor: f64,
    /// `max_i φ♭ / 256`.
    pub tail_threshold: f64,
    pub members: Vec<GapMember>,
    pub worst_adaptive_mean: f64,
    pub worst_oracle_mean: f64,
    pub worst_adaptive_tail: f64,
    /// `worst_adaptive_mean / worst_oracle_mean`; absent when the oracle's
    /// worst mean is exactly zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub family: String,
    pub replicates: usize,
    pub base_seed: u64,
    pub points: Vec<GapPoint>,
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    lo <= x && x < hi
}

/// No source point in `L_in ∪ R_in` and every target point in the middle.
pub fn event_b(s_p: &LabeledSample, s_q: &LabeledSample) -> bool {
    use gap_intervals::*;
    !s_p.xs().iter().any(|&x| within(x, L_IN) || within(x, R_IN)) && s_q.xs().iter().all(|&x| within(x, MID))
}

/// Adaptive learner against the oracle at `i♭`, over every member.
pub fn gap_demo(cfg: &ExperimentConfig) -> Result<(Vec<RunRecord>, GapReport)> {
    if !matches!(cfg.family, FamilySpec::Gap { .. } | FamilySpec::ExtendedGap { .. }) {
        bail!("gap demo needs the gap or extended_gap family, got {}", cfg.family.name());
    }
    let mut cfg = cfg.clone();
    cfg.learners = vec![Learner::Algorithm1, Learner::Oracle];
    cfg.oracle_level = OracleRule::Flat;
    let prepared = prepare(&cfg)?;
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    order.sort_by_key(|&i| (prepared[i].sigma_index, i));
    let jobs: Vec<(usize, usize)> = order
        .iter()
        .flat_map(|&i| (0..cfg.replicates).map(move |r| (i, r)))
        .collect();
    let rows: Vec<(usize, bool, Vec<RunRecord>)> = jobs
        .into_par_iter()
        .map(|(i, r)| {
            let p = &prepared[i];
            let d = draw(&cfg, p, r);
            let b = event_b(&d.s_p, &d.s_q);
            Ok((i, b, run_one(&cfg, &cfg.selection, p, r, &d)?))
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    for (n_p, n_q) in cfg.size_pairs() {
        let members: Vec<&Prepared> = prepared.iter().filter(|p| p.n_p() == n_p && p.n_q() == n_q).collect();
        let first = members[0];
        let oracle_target = first.profile.min_phi_flat();
        let adaptive_floor = first.profile.max_phi_flat();
        let tail_threshold = adaptive_floor / 256.0;
        let mut out = Vec::new();
        for p in &members {
            let mine: Vec<&(usize, bool, Vec<RunRecord>)> =
                rows.iter().filter(|(i, _, _)| std::ptr::eq(&prepared[*i], *p)).collect();
            let excess = |l: Learner| -> Vec<f64> {
                mine.iter()
                    .flat_map(|(_, _, rs)| rs.iter().filter(|r| r.learner == l).map(|r| r.excess_q))
                    .collect()
            };
            let tail = |xs: &[f64]| xs.iter().filter(|&&e| e >= tail_threshold).count() as f64 / xs.len() as f64;
            let (a, o) = (excess(Learner::Algorithm1), excess(Learner::Oracle));
            let analytic = event_b_probability(&p.instance)?;
            let n = mine.len() as f64;
            out.push(GapMember {
                sigma: p.sigma_label(),
                oracle_level: p.profile.i_flat,
                adaptive: Stats::of(&a),
                oracle: Stats::of(&o),
                adaptive_tail: tail(&a),
                oracle_tail: tail(&o),
                event_b_empirical: mine.iter().filter(|(_, b, _)| *b).count() as f64 / n,
                event_b_analytic: analytic,
                event_b_sd: (analytic * (1.0 - analytic) / n).sqrt(),
            });
        }
        let worst = |f: fn(&GapMember) -> f64| out.iter().map(f).fold(0.0, f64::max);
        let worst_adaptive_mean = worst(|m| m.adaptive.mean);
        let worst_oracle_mean = worst(|m| m.oracle.mean);
        points.push(GapPoint {
            n_p,
            n_q,
            oracle_target,
            adaptive_floor,
            tail_threshold,
            worst_adaptive_tail: worst(|m| m.adaptive_tail),
            ratio: (worst_oracle_mean > 0.0).then(|| worst_adaptive_mean / worst_oracle_mean),
            worst_adaptive_mean,
            worst_oracle_mean,
            members: out,
        });
    }
    let records = rows.into_iter().flat_map(|(_, _, rs)| rs).collect();
    Ok((
        records,
        GapReport {
            family: cfg.family.name().to_string(),
            replicates: cfg.replicates,
            base_seed: cfg.base_seed,
            points,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;

    #[test]
    fn rejects_other_families() {
        let cfg = ExperimentConfig::new(
            ExperimentKind::GapDemo,
            FamilySpec::ThresholdNn { rhos: vec![1.0], max_level: None },
            vec![10],
            vec![10],
        );
        assert!(gap_demo(&cfg).is_err());
    }

    #[test]
    fn small_gap_run() {
        let mut cfg = ExperimentConfig::new(
            ExperimentKind::GapDemo,
            FamilySpec::Gap { rho_a: 2.0, rho_b: 1.0, allow_precondition_violation: false },
            vec![32],
            vec![1],
        );
        cfg.replicates = 20;
        let (records, report) = gap_demo(&cfg).unwrap();
        assert_eq!(records.len(), 4 * 20 * 2);
        let pt = &report.points[0];
        assert_eq!(pt.members.len(), 4);
        assert_eq!(pt.oracle_target, 1.0 / 32.0);
        for m in &pt.members {
            assert!(m.event_b_analytic >= 7.0 / 8.0);
        }
    }
}
