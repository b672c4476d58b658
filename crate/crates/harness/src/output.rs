use std::path::Path;

use anyhow::{Context, Result};
use model_transfer::selection::Branch;
use serde::{Deserialize, Serialize};

use crate::config::Learner;

/// Bumped whenever the record columns change.
pub const RECORDS_VERSION: u32 = 1;

/// One learner's outcome on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub replicate: usize,
    /// Member label such as `+1,-1`; empty for single-member families.
    pub sigma: String,
    pub n_p: usize,
    pub n_q: usize,
    pub learner: Learner,
    /// `î_P`, or the oracle's level; absent for the target-only learner.
    pub source_level: Option<usize>,
    /// `î_Q`.
    pub target_level: usize,
    pub chosen_level: usize,
    pub branch: Option<Branch>,
    pub excess_q: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time: Option<f64>,
}

fn branch_name(b: Option<Branch>) -> &'static str {
    match b {
        Some(Branch::SourceAccepted) => "source_accepted",
        Some(Branch::TargetFallback) => "target_fallback",
        None => "",
    }
}

fn opt(v: Option<usize>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// Records as CSV, preceded by a `# records v1` line.
pub fn records_csv(records: &[RunRecord], timing: bool) -> Result<Vec<u8>> {
    let mut out = format!("# records v{RECORDS_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec![
            "replicate", "sigma", "n_p", "n_q", "learner", "source_level", "target_level", "chosen_level", "branch",
            "excess_q",
        ];
        if timing {
            header.push("wall_time");
        }
        w.write_record(&header)?;
        for r in records {
            let mut row = vec![
                r.replicate.to_string(),
                r.sigma.clone(),
                r.n_p.to_string(),
                r.n_q.to_string(),
                r.learner.name().to_string(),
                opt(r.source_level),
                r.target_level.to_string(),
                r.chosen_level.to_string(),
                branch_name(r.branch).to_string(),
                r.excess_q.to_string(),
            ];
            if timing {
                row.push(r.wall_time.map_or(String::new(), |t| t.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Writes `records.csv` (or `records.json`) and `summary.json` into `dir`.
pub fn write_outputs<S: Serialize>(
    dir: &Path,
    records: Option<&[RunRecord]>,
    summary: &S,
    format: Format,
    timing: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    if let Some(records) = records {
        match format {
            Format::Csv => std::fs::write(dir.join("records.csv"), records_csv(records, timing)?)?,
            Format::Json => {
                let mut text = serde_json::to_string_pretty(records)?;
                text.push('\n');
                std::fs::write(dir.join("records.json"), text)?;
            }
        }
    }
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(dir.join("summary.json"), text)?;
    Ok(())
}

/// Mean, standard error, median, 90th percentile and max of `xs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub std_err: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

/// Nearest-rank quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

impl Stats {
    pub fn of(xs: &[f64]) -> Stats {
        let n = xs.len();
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Stats {
            count: n,
            mean,
            std_err: (var / n as f64).sqrt(),
            median: quantile_sorted(&sorted, 0.5),
            p90: quantile_sorted(&sorted, 0.9),
            max: sorted.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile_sorted(&xs, 0.9), 9.0);
        assert_eq!(quantile_sorted(&xs, 0.5), 5.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 10.0);
        let s = Stats::of(&xs);
        assert_eq!(s.mean, 5.5);
        assert_eq!(s.max, 10.0);
    }

    #[test]
    fn csv_has_version_line() {
        let r = RunRecord {
            replicate: 0,
            sigma: "+1,-1".into(),
            n_p: 10,
            n_q: 5,
            learner: Learner::Oracle,
            source_level: Some(2),
            target_level: 1,
            chosen_level: 2,
            branch: Some(Branch::SourceAccepted),
            excess_q: 0.125,
            wall_time: None,
        };
        let text = String::from_utf8(records_csv(&[r], false).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# records v1"));
        assert_eq!(
            lines.next(),
            Some("replicate,sigma,n_p,n_q,learner,source_level,target_level,chosen_level,branch,excess_q")
        );
        assert_eq!(lines.next(), Some("0,\"+1,-1\",10,5,oracle,2,1,2,source_accepted,0.125"));
    }
}
