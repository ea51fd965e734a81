//! The five CLI workflows.

use std::path::{Path, PathBuf};

use pacdp_core::accountant::write_ledgers;
use pacdp_core::federation::{communication_report, run_training, QuantileState};
use pacdp_core::fitting::{fit_quadratic, iqr_filter, monotone_project, select_optimal, simulate_grid};
use pacdp_core::fmt::sig9;
use pacdp_core::schedule::lambda_table;
use pacdp_core::{AccountantConfig, ClipBound, ClippingPolicy, ScheduleParams};

use crate::config::{check_policy, PolicyKind, RunConfig};
use crate::output::{
    self, account_file, accounting_csv, curve_csv, curve_samples, history_csv, matrix_csv, read_file, read_history,
    write_file, ClientSummary, EpsilonStats, FailedCell, FitFile, Provenance, Report, Summary,
};
use crate::{CliError, CliResult, ConfigError};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub policy: Option<PolicyKind>,
    pub clip: Option<f64>,
    pub delta: Option<f64>,
}

impl Overrides {
    /// Applies the overrides and re-checks the fields they touch.
    pub fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        if let Some(kind) = self.policy {
            cfg.policy.kind = kind;
        }
        if let Some(clip) = self.clip {
            cfg.policy.clip = Some(clip);
        }
        let mut violations = Vec::new();
        if let Some(delta) = self.delta {
            cfg.privacy.accountant.delta = delta;
            if let Err(e) = cfg.privacy.accountant.validate() {
                violations.push(format!("--delta: {e}"));
            }
        }
        check_policy(&cfg.policy, &mut violations);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { violations }.into())
        }
    }
}

fn out_dir(cfg: &RunConfig) -> CliResult<&Path> {
    cfg.out_dir
        .as_deref()
        .ok_or_else(|| ConfigError::single("out_dir: missing; set it in the config or pass --out").into())
}

/// Grid simulation on the proxy data, optimal-threshold selection, outlier
/// filtering and the quadratic fit. Writes `matrix.csv` and `fit.json`.
pub fn cmd_fit(cfg: &RunConfig) -> CliResult<FitFile> {
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| ConfigError::single("grid: section required by `fit`"))?;
    let out = out_dir(cfg)?;
    let (proxy, spec) = crate::pipeline::grid_spec(cfg, grid, cfg.seed)?;
    let matrix = simulate_grid(&proxy, &spec)?;
    let support = select_optimal(&matrix);
    let filtered = iqr_filter(&support);
    let mut fit = fit_quadratic(&filtered.kept)?;
    fit.iqr_skipped = filtered.skipped;
    if grid.monotone {
        fit = monotone_project(&fit, grid.eps[0], grid.eps[grid.eps.len() - 1])?;
    }
    let proxy_name = match &grid.proxy_path {
        Some(p) => p
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        None => format!("synthetic n={} seed={}", proxy.len(), grid.proxy_seed),
    };
    let file = FitFile {
        fit,
        provenance: Provenance {
            seed: cfg.seed,
            proxy: proxy_name,
            eps_grid: grid.eps.clone(),
            clip_grid: grid.clips.clone(),
            seeds_per_cell: grid.seeds_per_cell,
            cell_seeds: matrix.seeds.clone(),
            sim_clients: grid.clients,
            sim_sampled: grid.sampled,
            sim_rounds: grid.rounds,
            iqr_dropped: filtered.dropped,
            failed_runs: matrix
                .failures
                .iter()
                .map(|f| FailedCell::from_run(f, &matrix))
                .collect(),
        },
    }
    .rounded();
    write_file(&out.join(output::MATRIX_FILE), &matrix_csv(&matrix))?;
    write_file(&out.join(output::FIT_FILE), &file.to_json())?;
    Ok(file)
}

/// Federated training under the configured clipping policy. Writes
/// `history.csv`, `ledger.csv`, `summary.json` and, for the PAC-DP policy,
/// a copy of the fit it used.
pub fn cmd_train(cfg: &RunConfig, fit_path: Option<&Path>) -> CliResult<Summary> {
    let out = out_dir(cfg)?.to_path_buf();
    let (policy, fit_file) = match cfg.policy.kind {
        PolicyKind::Pacdp => {
            let path = fit_path
                .map(Path::to_path_buf)
                .unwrap_or_else(|| out.join(output::FIT_FILE));
            let file = FitFile::load(&path)?;
            let schedule = ScheduleParams::new(cfg.federation.rounds, cfg.r_s, cfg.lambda_min)?;
            let policy = ClippingPolicy::PacDp {
                fit: file.fit.clone(),
                schedule,
            };
            (policy, Some(file))
        }
        PolicyKind::Fixed => (
            ClippingPolicy::Fixed(ClipBound::new(cfg.policy.clip.expect("checked by config"))?),
            None,
        ),
        PolicyKind::Quantile => {
            let p = &cfg.policy;
            let state = QuantileState::new(
                p.quantile.expect("checked by config"),
                p.initial_clip.expect("checked by config"),
                p.quantile_lr.expect("checked by config"),
            )?;
            (ClippingPolicy::Quantile(state), None)
        }
    };

    let data = crate::pipeline::training_data(cfg, cfg.seed)?;
    let fed = crate::pipeline::federation_config(cfg, data.model, policy, cfg.seed);
    let mut clients = crate::pipeline::clients(cfg, data.clients, &fed)?;
    let result = run_training(&fed, &mut clients, &data.eval)?;

    let mut ledger_text = Vec::new();
    write_ledgers(&mut ledger_text, &result.ledgers)?;
    let ledger_path = out.join(output::LEDGER_FILE);
    write_file(&out.join(output::HISTORY_FILE), &history_csv(&result.history))?;
    write_file(&ledger_path, &String::from_utf8(ledger_text).expect("ledger is utf-8"))?;
    if let Some(file) = &fit_file {
        write_file(&out.join(output::FIT_FILE), &file.to_json())?;
    }

    // ε comes from the written ledger, the same path `account` takes
    let accounting = account_file(&ledger_path, &cfg.privacy.accountant)?;
    let comm = communication_report(&result.history);
    let last = result.history.last();
    let summary = Summary {
        policy: fed.policy.name().to_string(),
        seed: cfg.seed,
        rounds: result.history.len(),
        final_loss: last.map(|r| r.loss).unwrap_or(f64::NAN),
        final_accuracy: last.and_then(|r| r.accuracy),
        delta: cfg.privacy.accountant.delta,
        epsilon: accounting.summary.map(|s| EpsilonStats {
            min: s.min,
            median: s.median,
            max: s.max,
        }),
        clients: accounting
            .per_client
            .iter()
            .map(|c| ClientSummary {
                client_id: c.client_id,
                target: clients[c.client_id].eps_target,
                epsilon: c.epsilon,
                alpha: c.alpha,
            })
            .collect(),
        messages: comm.messages,
        floats: comm.floats,
        failed_updates: result.history.iter().map(|r| r.failed.len()).sum(),
        history_file: output::HISTORY_FILE.into(),
        ledger_file: output::LEDGER_FILE.into(),
        fit_file: fit_file.map(|_| output::FIT_FILE.into()),
    };
    write_file(&out.join(output::SUMMARY_FILE), &summary.to_json())?;
    Ok(summary)
}

/// Per-client ε table for a ledger export, as CSV text. An empty ledger
/// yields just the header.
pub fn cmd_account(ledger: &Path, accountant: &AccountantConfig) -> CliResult<String> {
    accountant.validate()?;
    let report = account_file(ledger, accountant)?;
    Ok(accounting_csv(&report))
}

/// Consolidates a run directory into `report.json` and `curve.csv`.
pub fn cmd_report(dir: &Path) -> CliResult<Report> {
    let summary = Summary::load(&dir.join(output::SUMMARY_FILE))?;
    let history = read_history(&dir.join(&summary.history_file))?;
    // the ledger must still parse, even though the summary already holds ε
    pacdp_core::accountant::read_ledgers(read_file(&dir.join(&summary.ledger_file), "ledger file")?.as_bytes())
        .map_err(|e| CliError::at(&dir.join(&summary.ledger_file), e))?;
    let fit = match &summary.fit_file {
        Some(name) => Some(FitFile::load(&dir.join(name))?.fit),
        None => match dir.join(output::FIT_FILE) {
            p if p.exists() => Some(FitFile::load(&p)?.fit),
            _ => None,
        },
    };
    let (support, curve) = match &fit {
        Some(f) => (f.support.clone(), curve_samples(f)),
        None => (Vec::new(), Vec::new()),
    };
    let report = Report {
        summary,
        history,
        support,
        curve,
    };
    write_file(&dir.join(output::REPORT_FILE), &report.to_json())?;
    write_file(&dir.join(output::CURVE_FILE), &curve_csv(&report.curve))?;
    Ok(report)
}

/// The clip multiplier for every round, as `t,lambda` CSV.
pub fn cmd_schedule_dump(params: &ScheduleParams) -> CliResult<String> {
    let table = lambda_table(params)?;
    let mut out = String::from("t,lambda\n");
    for (t, l) in table.iter().enumerate() {
        out.push_str(&format!("{t},{}\n", sig9(*l)));
    }
    Ok(out)
}
