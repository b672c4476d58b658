use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use model_transfer::analysis::{complete_truth, excess_risk, rate_profile, RateProfile};
use model_transfer::constructions::{TransferInstance, Which};
use model_transfer::distribution::{LabeledSample, SampleSource};
use model_transfer::selection::{algorithm1, lepski_min_level, oracle_learner, SelectionConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Learner, OracleRule};
use crate::output::{RunRecord, Stats};
use crate::seeds::{replicate_seed, Stream};

/// Excess risks this far below zero mean the analytic oracle is wrong.
pub const NEGATIVE_ABORT: f64 = -1e-9;

/// One family member at one `(n_P, n_Q)`, with ground truth completed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub sigma_index: usize,
    pub instance: TransferInstance,
    pub profile: RateProfile,
}

impl Prepared {
    pub fn sigma_label(&self) -> String {
        sigma_label(&self.instance.sigma)
    }

    pub fn n_p(&self) -> usize {
        self.profile.n_p
    }

    pub fn n_q(&self) -> usize {
        self.profile.n_q
    }
}

pub fn sigma_label(sigma: &[i8]) -> String {
    sigma.iter().map(|v| format!("{v:+}")).collect::<Vec<_>>().join(",")
}

/// Builds every member for every size pair, in `(n_P, n_Q, σ)` order.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Vec<Prepared>> {
    let mut cached: Option<Vec<TransferInstance>> = None;
    let mut out = Vec::new();
    for (n_p, n_q) in cfg.size_pairs() {
        let members = match &cached {
            Some(m) if !cfg.family.depends_on_sample_sizes() => m.clone(),
            _ => {
                let mut members = cfg
                    .family
                    .build(n_p, n_q)
                    .with_context(|| format!("building {} at n_P = {n_p}, n_Q = {n_q}", cfg.family.name()))?;
                for inst in &mut members {
                    complete_truth(inst, &cfg.grid).with_context(|| format!("ground truth for {}", inst.tag()))?;
                }
                cached = Some(members.clone());
                members
            }
        };
        for (sigma_index, mut instance) in members.into_iter().enumerate() {
            instance.n_p = n_p;
            instance.n_q = n_q;
            let profile = rate_profile(&instance, n_p, n_q, &cfg.rates)?;
            out.push(Prepared { sigma_index, instance, profile });
        }
    }
    Ok(out)
}

/// The three samples of one replicate.
pub struct Draw {
    pub s_p: LabeledSample,
    pub s_q: LabeledSample,
    pub holdout: LabeledSample,
}

pub fn draw(cfg: &ExperimentConfig, p: &Prepared, replicate: usize) -> Draw {
    let (n_p, n_q) = (p.n_p(), p.n_q());
    let seed = |stream| replicate_seed(cfg.base_seed, p.sigma_index, n_p, n_q, replicate, stream);
    Draw {
        s_p: p.instance.source.sample(n_p, seed(Stream::Source), SampleSource::P),
        s_q: p.instance.target.sample(n_q, seed(Stream::Target), SampleSource::Q),
        holdout: p.instance.target.sample(n_q, seed(Stream::Holdout), SampleSource::QHoldout),
    }
}

/// Exact target excess with round-off clamped away.
pub fn checked_excess(inst: &TransferInstance, h: &model_transfer::hypothesis::Hypothesis) -> Result<f64> {
    let e = excess_risk(inst, Which::Q, h)?;
    if e < NEGATIVE_ABORT {
        bail!("negative excess risk {e} for {} on {}", serde_json::to_string(h)?, inst.tag());
    }
    Ok(e.max(0.0))
}

pub fn oracle_level(rule: OracleRule, profile: &RateProfile) -> usize {
    match rule {
        OracleRule::Sharp => profile.i_sharp,
        OracleRule::Flat => profile.i_flat,
    }
}

/// Runs every requested learner on one replicate.
pub fn run_one(
    cfg: &ExperimentConfig,
    selection: &SelectionConfig,
    p: &Prepared,
    replicate: usize,
    d: &Draw,
) -> Result<Vec<RunRecord>> {
    let h = &p.instance.hierarchy;
    let mut out = Vec::with_capacity(cfg.learners.len());
    for &learner in &cfg.learners {
        let start = Instant::now();
        let (hyp, source_level, target_level, branch) = match learner {
            Learner::Algorithm1 => {
                let (hyp, t) = algorithm1(h, &d.s_p, &d.s_q, &d.holdout, selection)?;
                (hyp, t.source_level, t.target_level, Some(t.branch))
            }
            Learner::Oracle => {
                let level = oracle_level(cfg.oracle_level, &p.profile);
                let (hyp, t) = oracle_learner(h, level, &d.s_p, &d.s_q, &d.holdout, selection)?;
                (hyp, t.source_level, t.target_level, Some(t.branch))
            }
            Learner::TargetOnly => {
                let l = lepski_min_level(h, &d.s_q, selection)?;
                (l.hypothesis, None, l.level, None)
            }
        };
        let elapsed = start.elapsed().as_secs_f64();
        let chosen_level = match branch {
            Some(model_transfer::selection::Branch::SourceAccepted) => source_level.unwrap_or(target_level),
            _ => target_level,
        };
        out.push(RunRecord {
            replicate,
            sigma: p.sigma_label(),
            n_p: p.n_p(),
            n_q: p.n_q(),
            learner,
            source_level,
            target_level,
            chosen_level,
            branch,
            excess_q: checked_excess(&p.instance, &hyp)?,
            wall_time: cfg.output.record_timing.then_some(elapsed),
        });
    }
    Ok(out)
}

/// Jobs in `(σ, n_P, n_Q, replicate)` order.
fn jobs(prepared: &[Prepared], replicates: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    order.sort_by_key(|&i| (prepared[i].sigma_index, i));
    order
        .into_iter()
        .flat_map(|i| (0..replicates).map(move |r| (i, r)))
        .collect()
}

/// All replicates of all members; rows ordered by `(σ, n_P, n_Q,
/// replicate, learner)` regardless of scheduling.
pub fn run_replicates(cfg: &ExperimentConfig, prepared: &[Prepared]) -> Result<Vec<RunRecord>> {
    let rows: Vec<Vec<RunRecord>> = jobs(prepared, cfg.replicates)
        .into_par_iter()
        .map(|(i, r)| {
            let p = &prepared[i];
            run_one(cfg, &cfg.selection, p, r, &draw(cfg, p, r))
                .with_context(|| format!("{} replicate {r}", p.instance.tag()))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Aggregates for one `(σ, n_P, n_Q, learner)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub sigma: String,
    pub n_p: usize,
    pub n_q: usize,
    pub learner: Learner,
    pub excess_q: Stats,
    /// Fraction of replicates with `î_Q ≤ i*_Q`.
    pub target_level_ok: f64,
    /// Fraction of replicates that kept the source candidate.
    pub source_accepted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub sigma: String,
    pub profile: RateProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurveSummary {
    pub family: String,
    pub replicates: usize,
    pub base_seed: u64,
    pub groups: Vec<GroupSummary>,
    pub profiles: Vec<ProfileSummary>,
}

type Key = (usize, usize, usize, Learner);

/// Groups records by `(σ, n_P, n_Q, learner)` in first-seen order of σ.
pub fn group_records<'a>(prepared: &[Prepared], records: &'a [RunRecord]) -> BTreeMap<Key, Vec<&'a RunRecord>> {
    let sigma_index: BTreeMap<String, usize> =
        prepared.iter().map(|p| (p.sigma_label(), p.sigma_index)).collect();
    let mut groups: BTreeMap<Key, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((sigma_index[&r.sigma], r.n_p, r.n_q, r.learner))
            .or_default()
            .push(r);
    }
    groups
}

fn find(prepared: &[Prepared], sigma: usize, n_p: usize, n_q: usize) -> &Prepared {
    prepared
        .iter()
        .find(|p| p.sigma_index == sigma && p.n_p() == n_p && p.n_q() == n_q)
        .expect("every record comes from a prepared instance")
}

pub fn summarize(cfg: &ExperimentConfig, prepared: &[Prepared], records: &[RunRecord]) -> RateCurveSummary {
    let groups = group_records(prepared, records)
        .into_iter()
        .map(|((s, n_p, n_q, learner), rs)| {
            let p = find(prepared, s, n_p, n_q);
            let i_star_q = p.profile.i_star_q;
            let xs: Vec<f64> = rs.iter().map(|r| r.excess_q).collect();
            let n = rs.len() as f64;
            let ok = rs.iter().filter(|r| r.target_level <= i_star_q).count() as f64 / n;
            let accepted = (learner != Learner::TargetOnly).then(|| {
                rs.iter()
                    .filter(|r| r.branch == Some(model_transfer::selection::Branch::SourceAccepted))
                    .count() as f64
                    / n
            });
            GroupSummary {
                sigma: p.sigma_label(),
                n_p,
                n_q,
                learner,
                excess_q: Stats::of(&xs),
                target_level_ok: ok,
                source_accepted: accepted,
            }
        })
        .collect();
    let mut profiles: Vec<&Prepared> = prepared.iter().collect();
    profiles.sort_by_key(|p| (p.sigma_index, p.n_p(), p.n_q()));
    RateCurveSummary {
        family: cfg.family.name().to_string(),
        replicates: cfg.replicates,
        base_seed: cfg.base_seed,
        groups,
        profiles: profiles
            .into_iter()
            .map(|p| ProfileSummary { sigma: p.sigma_label(), profile: p.profile.clone() })
            .collect(),
    }
}

/// Rate-curve experiment: records plus their summary.
pub fn rate_curve(cfg: &ExperimentConfig) -> Result<(Vec<RunRecord>, RateCurveSummary)> {
    let prepared = prepare(cfg)?;
    let records = run_replicates(cfg, &prepared)?;
    let summary = summarize(cfg, &prepared, &records);
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;
    use model_transfer::constructions::FamilySpec;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            ExperimentKind::RateCurve,
            FamilySpec::ThresholdNn { rhos: vec![1.0, 2.0], max_level: None },
            vec![50, 200],
            vec![20],
        );
        cfg.replicates = 4;
        cfg.base_seed = 3;
        cfg
    }

    #[test]
    fn records_are_ordered_and_complete() {
        let cfg = small();
        let (records, summary) = rate_curve(&cfg).unwrap();
        assert_eq!(records.len(), 2 * 4 * 3);
        assert!(records.iter().all(|r| r.excess_q >= 0.0));
        assert_eq!(records[0].n_p, 50);
        assert_eq!(records[0].replicate, 0);
        assert_eq!(records[3].replicate, 1);
        assert_eq!(summary.groups.len(), 2 * 3);
        assert_eq!(summary.profiles.len(), 2);
    }

    #[test]
    fn identical_seeds_identical_records() {
        let cfg = small();
        let a = rate_curve(&cfg).unwrap().0;
        let b = rate_curve(&cfg).unwrap().0;
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.base_seed = 4;
        assert_ne!(rate_curve(&other).unwrap().0, a);
    }

    #[test]
    fn realizable_target_is_recovered() {
        let mut cfg = small();
        cfg.n_p = vec![0];
        cfg.n_q = vec![400];
        cfg.learners = vec![Learner::TargetOnly];
        cfg.replicates = 1;
        let (records, _) = rate_curve(&cfg).unwrap();
        assert!(records[0].excess_q < 0.02, "{:?}", records[0]);
    }
}
