use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pacdp_cli::{commands, config, CliError, CliResult, ConfigError, Overrides, PolicyKind};
use pacdp_core::fmt::sig9;
use pacdp_core::{AccountantConfig, ScheduleParams};

#[derive(Parser)]
#[command(
    name = "pacdp",
    version,
    about = "Budget-aware clipping for differentially private federated learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Clipping policy; overrides the config.
    #[arg(long, global = true, value_enum)]
    policy: Option<PolicyKind>,
    /// Clip bound for the fixed policy.
    #[arg(long, global = true)]
    clip: Option<f64>,
    /// Target δ; overrides the config.
    #[arg(long, global = true)]
    delta: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the (ε, C) grid on proxy data and fit the threshold curve.
    Fit,
    /// Run federated training and write history, ledger and summary.
    Train {
        /// Fit file for the pacdp policy (default: <out>/fit.json).
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Per-client ε from a ledger export.
    Account {
        #[arg(long)]
        ledger: PathBuf,
    },
    /// Consolidate a run directory into plot-ready JSON and CSV.
    Report,
    /// Print the clip multiplier for every round as CSV.
    ScheduleDump {
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        r_s: Option<f64>,
        #[arg(long)]
        lambda_min: Option<f64>,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            policy: self.policy,
            clip: self.clip,
            delta: self.delta,
        }
    }

    fn load(&self) -> CliResult<config::RunConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| ConfigError::single("--config: required by this subcommand"))?;
        let mut cfg = config::parse_config(path)?;
        self.overrides().apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Fit => {
            let cfg = cli.load()?;
            let file = commands::cmd_fit(&cfg)?;
            let f = &file.fit;
            eprintln!(
                "fit: C = {}·ε² + {}·ε + {} (r² = {}, {} support points, {} failed runs)",
                sig9(f.alpha),
                sig9(f.beta),
                sig9(f.gamma),
                sig9(f.r2),
                f.support.len(),
                file.provenance.failed_runs.len()
            );
        }
        Command::Train { fit } => {
            let cfg = cli.load()?;
            let summary = commands::cmd_train(&cfg, fit.as_deref())?;
            if let Some(acc) = summary.final_accuracy {
                eprintln!("train: final accuracy {}", sig9(acc));
            }
            let over: Vec<String> = summary
                .clients
                .iter()
                .filter(|c| c.epsilon > c.target)
                .map(|c| format!("{} ({} > {})", c.client_id, sig9(c.epsilon), sig9(c.target)))
                .collect();
            if !over.is_empty() {
                eprintln!(
                    "warning: realized ε exceeds the target for clients sampled more often than expected: {}",
                    over.join(", ")
                );
            }
            if summary.failed_updates > 0 {
                eprintln!(
                    "warning: {} client updates failed and were dropped",
                    summary.failed_updates
                );
            }
        }
        Command::Account { ledger } => {
            let mut accountant = match &cli.config {
                Some(_) => cli.load()?.privacy.accountant,
                None => AccountantConfig::default(),
            };
            if let Some(delta) = cli.delta {
                accountant.delta = delta;
            }
            let table = commands::cmd_account(ledger, &accountant)?;
            if table.lines().count() == 1 {
                eprintln!("warning: {} holds no ledger entries", ledger.display());
            }
            print!("{table}");
        }
        Command::Report => {
            let dir = match (&cli.out, &cli.config) {
                (Some(out), _) => out.clone(),
                (None, Some(_)) => cli
                    .load()?
                    .out_dir
                    .ok_or_else(|| ConfigError::single("out_dir: missing; pass --out"))?,
                (None, None) => return Err(ConfigError::single("--out: run directory required").into()),
            };
            commands::cmd_report(&dir)?;
        }
        Command::ScheduleDump {
            rounds,
            r_s,
            lambda_min,
        } => {
            let base = match &cli.config {
                Some(_) => cli.load()?.schedule(),
                None => ScheduleParams {
                    total_rounds: rounds.ok_or_else(|| ConfigError::single("--rounds: required without --config"))?,
                    r_s: ScheduleParams::DEFAULT_R_S,
                    lambda_min: ScheduleParams::DEFAULT_LAMBDA_MIN,
                },
            };
            let params = ScheduleParams {
                total_rounds: rounds.unwrap_or(base.total_rounds),
                r_s: r_s.unwrap_or(base.r_s),
                lambda_min: lambda_min.unwrap_or(base.lambda_min),
            };
            params
                .validate()
                .map_err(|e| CliError::Config(ConfigError::single(format!("schedule: {e}"))))?;
            let table = commands::cmd_schedule_dump(&params)?;
            if let Some(out) = &cli.out {
                std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
                let path = out.join(pacdp_cli::output::SCHEDULE_FILE);
                std::fs::write(&path, &table).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            }
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
