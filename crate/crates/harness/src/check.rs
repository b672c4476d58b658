use anyhow::Result;
use model_transfer::distribution::{LabeledSample, SampleSource};
use model_transfer::erm::{erm_bruteforce, erm_dp, erm_dp_faulty};
use model_transfer::hypothesis::{enumerate_hypotheses, HierarchySpec, Label};
use model_transfer::selection::{intersection_representative, minimal_set_contains, Intersection, SelectionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::seeds::{derive_seed, Stream};

/// A case that disagreed with the exhaustive oracle, with what is needed
/// to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub case: usize,
    pub seed: u64,
    pub check: String,
    pub level: usize,
    pub points: Vec<(f64, i8)>,
    pub fast: String,
    pub exhaustive: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmCheckReport {
    pub cases: usize,
    pub fault_injected: bool,
    pub seeds: Vec<u64>,
    pub mismatches: Vec<Mismatch>,
}

impl ErmCheckReport {
    pub fn pass(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Random sample of `1..=max_n` points on a coarse grid (so ties occur)
/// and a level in `0..=max_level`.
pub fn random_case(seed: u64, max_n: usize, max_level: usize) -> (LabeledSample, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_n.max(1));
    let level = rng.random_range(0..=max_level);
    let pts = (0..n)
        .map(|_| {
            let x = rng.random_range(0..2 * n) as f64 / (2 * n) as f64;
            let y = if rng.random_bool(0.5) { Label::Positive } else { Label::Negative };
            (x, y)
        })
        .collect();
    (LabeledSample::new(pts, seed, SampleSource::P), level)
}

fn exhaustive_nonempty(h: &HierarchySpec, s: &LabeledSample, from: usize, cfg: &SelectionConfig) -> Result<bool> {
    for cand in enumerate_hypotheses(s.xs(), from) {
        let cand = cand.into();
        let mut all = true;
        for j in from..=h.max_level {
            if !minimal_set_contains(h, &cand, s, j, cfg)? {
                all = false;
                break;
            }
        }
        if all {
            return Ok(true);
        }
    }
    Ok(false)
}

/// ERM dynamic program against brute force, and the intersection search
/// against exhaustive enumeration, on random small cases.
pub fn erm_check(cfg: &ExperimentConfig, inject_fault: bool) -> Result<ErmCheckReport> {
    let ec = &cfg.erm_check;
    let hierarchy = HierarchySpec::boundary(ec.max_level);
    let selection = SelectionConfig { l_max: Some(ec.max_level), ..cfg.selection.clone() };
    let mut seeds = Vec::with_capacity(ec.cases);
    let mut mismatches = Vec::new();
    for case in 0..ec.cases {
        let seed = derive_seed(cfg.base_seed, &[Stream::ErmCase as u64, case as u64]);
        seeds.push(seed);
        let (s, level) = random_case(seed, ec.max_n, ec.max_level);
        let points: Vec<(f64, i8)> = s.iter().map(|(x, y)| (x, y.as_i8())).collect();
        let fast = if inject_fault { erm_dp_faulty(&s, level) } else { erm_dp(&s, level) };
        let brute = erm_bruteforce(&s, level)?;
        if fast.mistakes != brute.mistakes {
            mismatches.push(Mismatch {
                case,
                seed,
                check: "erm".into(),
                level,
                points: points.clone(),
                fast: fast.mistakes.to_string(),
                exhaustive: brute.mistakes.to_string(),
            });
        }
        let found = intersection_representative(&hierarchy, &s, level, &selection)?;
        let want = exhaustive_nonempty(&hierarchy, &s, level, &selection)?;
        let got = match &found {
            Intersection::Found { .. } => Some(true),
            Intersection::Empty => Some(false),
            Intersection::Inconclusive => None,
        };
        if got != Some(want) {
            mismatches.push(Mismatch {
                case,
                seed,
                check: "intersection".into(),
                level,
                points,
                fast: format!("{got:?}"),
                exhaustive: want.to_string(),
            });
        }
    }
    Ok(ErmCheckReport {
        cases: ec.cases,
        fault_injected: inject_fault,
        seeds,
        mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;
    use model_transfer::constructions::FamilySpec;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::new(
            ExperimentKind::ErmCheck,
            FamilySpec::ThresholdNn { rhos: vec![1.0], max_level: None },
            vec![1],
            vec![1],
        )
    }

    #[test]
    fn clean_run_has_no_mismatches() {
        let r = erm_check(&cfg(), false).unwrap();
        assert_eq!(r.seeds.len(), 200);
        assert!(r.pass(), "{:?}", r.mismatches.first());
    }

    #[test]
    fn injected_fault_is_caught() {
        let r = erm_check(&cfg(), true).unwrap();
        assert!(!r.pass());
        let m = r.mismatches.iter().find(|m| m.check == "erm").unwrap();
        let (s, level) = random_case(m.seed, 12, 4);
        assert_eq!(level, m.level);
        assert_ne!(erm_dp_faulty(&s, level).mistakes, erm_bruteforce(&s, level).unwrap().mistakes);
    }
}
