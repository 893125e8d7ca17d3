use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use leasgd_core::Mode;
use leasgd_sim::analysis::{audit_privacy, bound_check, compare};
use leasgd_sim::error::{Result, SimError, EXIT_RUNTIME};
use leasgd_sim::{export, prepare, run_experiment, RunConfig};

#[derive(Parser)]
#[command(name = "leasgd", version, about = "Leader/follower elastic-averaging SGD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Theory,
    Explore,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Theory => Mode::Theory,
            ModeArg::Explore => Mode::Explore,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a configuration and export the traces.
    Run {
        /// TOML or JSON configuration.
        config: PathBuf,
        /// Derive the seeds from this master seed, replacing any seed list.
        #[arg(long)]
        master_seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Output directory; defaults to the configuration's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loss and communication deltas between two trace directories.
    Compare { a: PathBuf, b: PathBuf },
    /// Recompute every ε in a ledger file.
    AuditPrivacy { ledger: PathBuf },
    /// Check a trace directory against the convergence bound.
    BoundCheck {
        traces: PathBuf,
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        slack: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable report")
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            config,
            master_seed,
            mode,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = master_seed {
                cfg = cfg.with_master_seed(seed);
            }
            if let Some(mode) = mode {
                cfg = cfg.with_mode(mode.into());
            }
            let out = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| SimError::Config("no output directory: pass --out or set `output`".into()))?;
            let prepared = prepare(cfg)?;
            for w in &prepared.warnings {
                eprintln!("warning: {w}");
            }
            let experiment = run_experiment(&prepared)?;
            export(&experiment, &prepared.config, &out)?;
            println!("{}", json(&experiment.summary));
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { a, b } => {
            println!("{}", json(&compare(&a, &b)?));
            Ok(ExitCode::SUCCESS)
        }
        Command::AuditPrivacy { ledger } => {
            let rows = audit_privacy(&ledger)?;
            println!(
                "{:>4} {:>6} {:>8} {:>8} {:>10} {:>10} {:>14} {:>14} {:>14}",
                "run", "worker", "steps", "sigma2", "q", "delta", "epsilon", "recomputed", "strong_comp"
            );
            for r in &rows {
                println!(
                    "{:>4} {:>6} {:>8} {:>8.4} {:>10.6} {:>10.3e} {:>14.8} {:>14.8} {:>14.8}",
                    r.run, r.worker, r.steps, r.sigma2, r.q, r.delta, r.epsilon, r.recomputed, r.strong_composition
                );
            }
            if rows.iter().all(|r| r.agrees) {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: stored and recomputed epsilon disagree");
                Ok(ExitCode::from(EXIT_RUNTIME))
            }
        }
        Command::BoundCheck { traces, config, slack } => {
            let prepared = prepare(RunConfig::load(&config)?)?;
            let report = bound_check(&traces, &prepared, slack)?;
            println!("{}", json(&report));
            Ok(ExitCode::SUCCESS)
        }
    }
}
