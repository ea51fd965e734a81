//! File formats written and read by the CLI.
//!
//! Floats in JSON are rounded to 9 significant digits before serialization,
//! so an emitted file parses back to exactly the values it was written from.

use std::fs;
use std::path::Path;

use pacdp_core::accountant::{final_report, read_ledgers, AccountingReport};
use pacdp_core::fitting::{FailedRun, MonotoneRange, SupportPoint};
use pacdp_core::fmt::{round9, sig9};
use pacdp_core::{AccountantConfig, FitResult, PerformanceMatrix, RoundRecord};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

pub const MATRIX_FILE: &str = "matrix.csv";
pub const FIT_FILE: &str = "fit.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const SCHEDULE_FILE: &str = "schedule.csv";
pub const HISTORY_HEADER: &str = "round,loss,accuracy,mean_clip,messages,floats";
pub const CURVE_SAMPLES: usize = 100;

/// Where a fit came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub proxy: String,
    pub eps_grid: Vec<f64>,
    pub clip_grid: Vec<f64>,
    pub seeds_per_cell: usize,
    pub cell_seeds: Vec<u64>,
    pub sim_clients: usize,
    pub sim_sampled: usize,
    pub sim_rounds: usize,
    pub iqr_dropped: usize,
    pub failed_runs: Vec<FailedCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub eps: f64,
    pub clip: f64,
    pub seed: u64,
    pub reason: String,
}

impl FailedCell {
    pub fn from_run(run: &FailedRun, matrix: &PerformanceMatrix) -> Self {
        FailedCell {
            eps: round9(matrix.eps_values[run.row]),
            clip: round9(matrix.clip_values[run.col]),
            seed: run.seed,
            reason: run.reason.clone(),
        }
    }
}

/// The structured fit file: coefficients, support and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    #[serde(flatten)]
    pub fit: FitResult,
    pub provenance: Provenance,
}

impl FitFile {
    /// Rounds every float to what the file will hold.
    pub fn rounded(mut self) -> Self {
        let f = &mut self.fit;
        for v in [&mut f.alpha, &mut f.beta, &mut f.gamma, &mut f.r2, &mut f.clamp_floor] {
            *v = round9(*v);
        }
        for p in &mut f.support {
            *p = SupportPoint {
                eps: round9(p.eps),
                clip: round9(p.clip),
            };
        }
        if let Some(m) = &mut f.monotone {
            *m = MonotoneRange {
                lo: round9(m.lo),
                hi: round9(m.hi),
            };
        }
        let p = &mut self.provenance;
        p.eps_grid.iter_mut().for_each(|v| *v = round9(*v));
        p.clip_grid.iter_mut().for_each(|v| *v = round9(*v));
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.clone().rounded()).expect("fit file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: FitFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        file.fit.validate().map_err(|e| e.to_string())?;
        Ok(file)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_file(path, "fit file")?;
        FitFile::from_json(&text).map_err(|e| CliError::at(path, e))
    }
}

pub(crate) fn read_file(path: &Path, what: &str) -> CliResult<String> {
    if !path.exists() {
        return Err(CliError::at(path, format!("{what} not found")));
    }
    fs::read_to_string(path).map_err(|e| CliError::at(path, e))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::at(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::at(path, e))
}

/// Rows are budgets, columns thresholds.
pub fn matrix_csv(m: &PerformanceMatrix) -> String {
    let mut out = String::from("eps");
    for c in &m.clip_values {
        out.push_str(&format!(",{}", sig9(*c)));
    }
    out.push('\n');
    for (eps, row) in m.eps_values.iter().zip(&m.accuracy) {
        out.push_str(&sig9(*eps));
        for a in row {
            out.push_str(&format!(",{}", sig9(*a)));
        }
        out.push('\n');
    }
    out
}

pub fn history_csv(history: &[RoundRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in history {
        let acc = r.accuracy.map(sig9).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.round,
            sig9(r.loss),
            acc,
            sig9(r.mean_clip()),
            r.messages,
            r.floats
        ));
    }
    out
}

/// One parsed history row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRow {
    pub round: usize,
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub mean_clip: f64,
    pub messages: usize,
    pub floats: usize,
}

pub fn read_history(path: &Path) -> CliResult<Vec<HistoryRow>> {
    let text = read_file(path, "history file")?;
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(CliError::at(path, format!("expected header {HISTORY_HEADER:?}")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| CliError::at(path, format!("line {}: bad {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad("field count"));
            }
            Ok(HistoryRow {
                round: f[0].parse().map_err(|_| bad("round"))?,
                loss: f[1].parse().map_err(|_| bad("loss"))?,
                accuracy: if f[2].is_empty() {
                    None
                } else {
                    Some(f[2].parse().map_err(|_| bad("accuracy"))?)
                },
                mean_clip: f[3].parse().map_err(|_| bad("mean_clip"))?,
                messages: f[4].parse().map_err(|_| bad("messages"))?,
                floats: f[5].parse().map_err(|_| bad("floats"))?,
            })
        })
        .collect()
}

/// Per-client ε from a ledger export file.
pub fn account_file(path: &Path, accountant: &AccountantConfig) -> CliResult<AccountingReport> {
    let text = read_file(path, "ledger file")?;
    let ledgers = read_ledgers(text.as_bytes()).map_err(|e| CliError::at(path, e))?;
    Ok(final_report(&ledgers, accountant)?)
}

pub fn accounting_csv(report: &AccountingReport) -> String {
    let mut out = String::from("client_id,epsilon,alpha\n");
    for c in &report.per_client {
        out.push_str(&format!("{},{},{}\n", c.client_id, sig9(c.epsilon), c.alpha));
    }
    if let Some(s) = report.summary {
        out.push_str(&format!(
            "# min={} median={} max={}\n",
            sig9(s.min),
            sig9(s.median),
            sig9(s.max)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub client_id: usize,
    pub target: f64,
    pub epsilon: f64,
    pub alpha: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Headline numbers of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub policy: String,
    pub seed: u64,
    pub rounds: usize,
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
    pub delta: f64,
    pub epsilon: Option<EpsilonStats>,
    pub clients: Vec<ClientSummary>,
    pub messages: usize,
    pub floats: usize,
    pub failed_updates: usize,
    pub history_file: String,
    pub ledger_file: String,
    pub fit_file: Option<String>,
}

impl Summary {
    pub fn to_json(&self) -> String {
        let mut s = self.clone();
        s.final_loss = round9(s.final_loss);
        s.final_accuracy = s.final_accuracy.map(round9);
        s.delta = round9(s.delta);
        if let Some(e) = &mut s.epsilon {
            *e = EpsilonStats {
                min: round9(e.min),
                median: round9(e.median),
                max: round9(e.max),
            };
        }
        for c in &mut s.clients {
            c.target = round9(c.target);
            c.epsilon = round9(c.epsilon);
        }
        let mut text = serde_json::to_string_pretty(&s).expect("summary serializes");
        text.push('\n');
        text
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_file(path, "summary file")?;
        serde_json::from_str(&text).map_err(|e| CliError::at(path, e))
    }
}

/// Plot-ready consolidation of one run directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub summary: Summary,
    pub history: Vec<HistoryRow>,
    pub support: Vec<SupportPoint>,
    pub curve: Vec<SupportPoint>,
}

/// `CURVE_SAMPLES` evenly spaced evaluations over the support's budget range.
pub fn curve_samples(fit: &FitResult) -> Vec<SupportPoint> {
    let (lo, hi) = fit
        .support
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.eps), hi.max(p.eps))
        });
    if !lo.is_finite() {
        return Vec::new();
    }
    (0..CURVE_SAMPLES)
        .map(|i| {
            let eps = lo + (hi - lo) * i as f64 / (CURVE_SAMPLES - 1) as f64;
            SupportPoint {
                eps: round9(eps),
                clip: round9(fit.evaluate(eps)),
            }
        })
        .collect()
}

pub fn curve_csv(curve: &[SupportPoint]) -> String {
    let mut out = String::from("eps,clip\n");
    for p in curve {
        out.push_str(&format!("{},{}\n", sig9(p.eps), sig9(p.clip)));
    }
    out
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut r = self.clone();
        for h in &mut r.history {
            h.loss = round9(h.loss);
            h.accuracy = h.accuracy.map(round9);
            h.mean_clip = round9(h.mean_clip);
        }
        let summary: Summary = serde_json::from_str(&self.summary.to_json()).expect("summary round-trips");
        r.summary = summary;
        let mut text = serde_json::to_string_pretty(&r).expect("report serializes");
        text.push('\n');
        text
    }
}
