use anyhow::{bail, Result};
use model_transfer::analysis::RateProfile;
use model_transfer::erm::erm;
use model_transfer::selection::{algorithm2, SelectionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::quantile_sorted;
use crate::run::{checked_excess, draw, prepare, Prepared};
use crate::seeds::{derive_seed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    #[serde(rename = "C")]
    pub big_c: f64,
    pub c: f64,
    /// Max over members and sizes of `p90(excess) / φ♯(i*_P)`.
    pub kappa: f64,
    pub kappa_ci: (f64, f64),
    /// Fraction of replicates with `î_Q ≤ i*_Q`, pooled.
    pub target_level_ok: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub family: String,
    pub replicates: usize,
    pub required_frequency: f64,
    pub rows: Vec<CalibrationRow>,
    /// Index into `rows` of the smallest `κ` meeting the frequency
    /// requirement.
    pub recommended: Option<usize>,
}

struct Cell {
    excess: Vec<f64>,
    phi: f64,
}

fn kappa(cells: &[Cell]) -> f64 {
    cells
        .iter()
        .map(|c| {
            let mut xs = c.excess.clone();
            xs.sort_by(f64::total_cmp);
            quantile_sorted(&xs, 0.9) / c.phi
        })
        .fold(0.0, f64::max)
}

fn bootstrap_ci(cells: &[Cell], rounds: usize, seed: u64) -> (f64, f64) {
    if rounds == 0 {
        let k = kappa(cells);
        return (k, k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ks: Vec<f64> = (0..rounds)
        .map(|_| {
            let resampled: Vec<Cell> = cells
                .iter()
                .map(|c| Cell {
                    excess: (0..c.excess.len()).map(|_| c.excess[rng.random_range(0..c.excess.len())]).collect(),
                    phi: c.phi,
                })
                .collect();
            kappa(&resampled)
        })
        .collect();
    ks.sort_by(f64::total_cmp);
    (quantile_sorted(&ks, 0.025), quantile_sorted(&ks, 0.975))
}

fn i_star_p(p: &RateProfile) -> Result<usize> {
    match p.i_star_p {
        Some(i) => Ok(i),
        None => bail!("calibration needs i*_P"),
    }
}

/// One replicate: excess of algorithm2 seeded with the source ERM at
/// `i*_P`, and whether `î_Q ≤ i*_Q`.
fn replicate(cfg: &ExperimentConfig, sel: &SelectionConfig, p: &Prepared, r: usize) -> Result<(f64, bool)> {
    let d = draw(cfg, p, r);
    let h = &p.instance.hierarchy;
    let level = i_star_p(&p.profile)?;
    let candidate = erm(h, &d.s_p, level)?.hypothesis;
    let (chosen, trace) = algorithm2(h, &candidate, &d.s_q, &d.holdout, sel)?;
    Ok((checked_excess(&p.instance, &chosen)?, trace.target_level <= p.profile.i_star_q))
}

/// Sweeps `C × c` over the configured grid, using the same draws for
/// every setting.
pub fn calibrate(cfg: &ExperimentConfig) -> Result<CalibrationReport> {
    let prepared = prepare(cfg)?;
    let grid = &cfg.calibrate.grid;
    let mut rows = Vec::new();
    for &big_c in grid {
        for &c in grid {
            let sel = SelectionConfig { big_c, c, ..cfg.selection.clone() };
            sel.validate()?;
            let mut cells = Vec::new();
            let mut ok = 0usize;
            let mut total = 0usize;
            for p in &prepared {
                let out: Vec<(f64, bool)> = (0..cfg.replicates)
                    .into_par_iter()
                    .map(|r| replicate(cfg, &sel, p, r))
                    .collect::<Result<_>>()?;
                ok += out.iter().filter(|o| o.1).count();
                total += out.len();
                let level = i_star_p(&p.profile)?;
                let phi = p.profile.level(level).map_or(f64::NAN, |l| l.phi_sharp);
                cells.push(Cell { excess: out.into_iter().map(|o| o.0).collect(), phi });
            }
            let seed = derive_seed(cfg.base_seed, &[Stream::Bootstrap as u64, big_c.to_bits(), c.to_bits()]);
            rows.push(CalibrationRow {
                big_c,
                c,
                kappa: kappa(&cells),
                kappa_ci: bootstrap_ci(&cells, cfg.calibrate.bootstrap, seed),
                target_level_ok: ok as f64 / total as f64,
            });
        }
    }
    let required = 1.0 - cfg.selection.delta;
    let recommended = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.target_level_ok >= required && r.kappa.is_finite())
        .min_by(|a, b| a.1.kappa.total_cmp(&b.1.kappa))
        .map(|(i, _)| i);
    Ok(CalibrationReport {
        family: cfg.family.name().to_string(),
        replicates: cfg.replicates,
        required_frequency: required,
        rows,
        recommended,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;
    use model_transfer::constructions::FamilySpec;

    #[test]
    fn small_sweep() {
        let mut cfg = ExperimentConfig::new(
            ExperimentKind::Calibrate,
            FamilySpec::ThresholdNn { rhos: vec![1.0, 2.0], max_level: None },
            vec![200],
            vec![50],
        );
        cfg.replicates = 10;
        cfg.calibrate.grid = vec![0.5, 2.0];
        cfg.calibrate.bootstrap = 50;
        let r = calibrate(&cfg).unwrap();
        assert_eq!(r.rows.len(), 4);
        for row in &r.rows {
            assert!(row.kappa.is_finite());
            assert!(row.kappa_ci.0 <= row.kappa_ci.1);
        }
        // Looser minimal sets can only admit lower levels.
        let f = |bc: f64, c: f64| r.rows.iter().find(|x| x.big_c == bc && x.c == c).unwrap().target_level_ok;
        assert!(f(2.0, 2.0) >= f(0.5, 0.5));
    }
}
