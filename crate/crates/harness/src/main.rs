use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use model_transfer_harness::config::{ExperimentConfig, ExperimentKind};
use model_transfer_harness::output::{write_outputs, Format};
use model_transfer_harness::{calibrate, check, gap, run, verify};

#[derive(Parser)]
#[command(name = "model-transfer", version, about = "Transfer-learning model-selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `base_seed`.
    #[arg(long, env = "MODEL_TRANSFER_SEED")]
    seed: Option<u64>,
    /// Output directory; defaults to `output.dir`, then the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `replicates`.
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the experiment named by the config's `kind`.
    Run(Common),
    GapDemo(Common),
    Verify(Common),
    ErmCheck {
        #[command(flatten)]
        common: Common,
        /// Negative control: use a DP with a corrupted transition.
        #[arg(long)]
        inject_fault: bool,
    },
    Calibrate(Common),
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.base_seed = seed;
    }
    if let Some(r) = c.replicates {
        cfg.replicates = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(kind: ExperimentKind, c: &Common, inject_fault: bool) -> Result<bool> {
    let cfg = load(c)?;
    let dir = c
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let format = match c.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let timing = cfg.output.record_timing;
    let ok = match kind {
        ExperimentKind::RateCurve => {
            let (records, summary) = run::rate_curve(&cfg)?;
            write_outputs(&dir, Some(&records), &summary, format, timing)?;
            true
        }
        ExperimentKind::GapDemo => {
            let (records, report) = gap::gap_demo(&cfg)?;
            for pt in &report.points {
                eprintln!(
                    "n_P = {} n_Q = {}: worst adaptive mean {:.3e}, worst oracle mean {:.3e}, ratio {}",
                    pt.n_p,
                    pt.n_q,
                    pt.worst_adaptive_mean,
                    pt.worst_oracle_mean,
                    pt.ratio.map_or("unbounded".to_string(), |r| format!("{r:.1}"))
                );
            }
            write_outputs(&dir, Some(&records), &report, format, timing)?;
            true
        }
        ExperimentKind::Verify => {
            let report = verify::verify_construction(&cfg)?;
            for c in report.checks.iter().filter(|c| !c.pass) {
                eprintln!("FAIL {} {}: {} (expected {})", c.instance, c.property, c.measured, c.expected);
            }
            eprintln!("{} checks, {} failures", report.checks.len(), report.failures);
            write_outputs(&dir, None, &report, format, timing)?;
            report.pass
        }
        ExperimentKind::ErmCheck => {
            let report = check::erm_check(&cfg, inject_fault)?;
            for m in &report.mismatches {
                eprintln!("mismatch: case {} seed {} ({})", m.case, m.seed, m.check);
            }
            write_outputs(&dir, None, &report, format, timing)?;
            report.pass()
        }
        ExperimentKind::Calibrate => {
            let report = calibrate::calibrate(&cfg)?;
            match report.recommended {
                Some(i) => {
                    let r = &report.rows[i];
                    eprintln!("recommended C = {}, c = {}, kappa = {:.3}", r.big_c, r.c, r.kappa);
                }
                None => eprintln!("no setting reached the required frequency {}", report.required_frequency),
            }
            write_outputs(&dir, None, &report, format, timing)?;
            true
        }
    };
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => ExperimentConfig::load(&c.config).and_then(|cfg| execute(cfg.kind, c, false)),
        Command::GapDemo(c) => execute(ExperimentKind::GapDemo, c, false),
        Command::Verify(c) => execute(ExperimentKind::Verify, c, false),
        Command::ErmCheck { common, inject_fault } => execute(ExperimentKind::ErmCheck, common, *inject_fault),
        Command::Calibrate(c) => execute(ExperimentKind::Calibrate, c, false),
    }
    .context("experiment failed");
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
