//! Rényi-DP accounting over each client's participation ledger.
//!
//! Every Gaussian-mechanism invocation with noise multiplier `z` costs
//! `α / (2z²)` at order `α`. Costs add over a ledger and are converted to
//! `(ε, δ)` by minimising `ρ(α) + ln(1/δ)/(α − 1)` over an integer grid of
//! orders. No subsampling amplification is claimed.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig9;

/// Noise invocations of one client in one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: usize,
    pub z: f64,
    pub steps: usize,
}

impl LedgerEntry {
    pub fn new(round: usize, z: f64, steps: usize) -> Result<Self> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Domain(format!("ledger z must be positive, got {z}")));
        }
        if steps == 0 {
            return Err(Error::Domain("ledger steps must be >= 1".into()));
        }
        Ok(LedgerEntry { round, z, steps })
    }
}

/// All noised invocations of one client, rounds strictly increasing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParticipationLedger {
    pub client_id: usize,
    entries: Vec<LedgerEntry>,
}

impl ParticipationLedger {
    pub fn new(client_id: usize) -> Self {
        ParticipationLedger {
            client_id,
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of noised invocations.
    pub fn total_steps(&self) -> usize {
        self.entries.iter().map(|e| e.steps).sum()
    }

    /// Number of rounds the client took part in.
    pub fn rounds(&self) -> usize {
        self.entries.len()
    }

    /// Appends an entry. A later entry for the same round with the same `z`
    /// is merged into the existing one by adding its steps.
    pub fn record(&mut self, entry: LedgerEntry) -> Result<()> {
        if let Some(last) = self.entries.last_mut() {
            if entry.round == last.round && entry.z == last.z {
                last.steps += entry.steps;
                return Ok(());
            }
            if entry.round <= last.round {
                return Err(Error::Domain(format!(
                    "client {}: round {} recorded after round {}",
                    self.client_id, entry.round, last.round
                )));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn from_entries(client_id: usize, entries: Vec<LedgerEntry>) -> Result<Self> {
        let mut ledger = ParticipationLedger::new(client_id);
        for e in entries {
            ledger.record(e)?;
        }
        Ok(ledger)
    }

    /// A ledger of `rounds` identical rounds, as assumed by forward calibration.
    pub fn uniform(client_id: usize, z: f64, rounds: usize, steps: usize) -> Result<Self> {
        let entries = (0..rounds)
            .map(|t| LedgerEntry::new(t, z, steps))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParticipationLedger { client_id, entries })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountantConfig {
    pub alpha_grid: Vec<u32>,
    pub delta: f64,
}

impl Default for AccountantConfig {
    fn default() -> Self {
        AccountantConfig {
            alpha_grid: (2..=64).collect(),
            delta: 1e-5,
        }
    }
}

impl AccountantConfig {
    pub fn with_delta(delta: f64) -> Self {
        AccountantConfig {
            delta,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() {
            return Err(Error::Config("alpha grid is empty".into()));
        }
        if let Some(a) = self.alpha_grid.iter().find(|&&a| a < 2) {
            return Err(Error::Config(format!("alpha orders must exceed 1, got {a}")));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        Ok(())
    }

    fn penalty(&self, alpha: u32) -> f64 {
        (1.0 / self.delta).ln() / (alpha as f64 - 1.0)
    }
}

/// RDP of one Gaussian-mechanism invocation: `α / (2z²)`.
pub fn rdp_per_round(z: f64, alpha: u32) -> f64 {
    alpha as f64 / (2.0 * z * z)
}

/// Composed RDP of a ledger at order `alpha`.
pub fn compose(ledger: &ParticipationLedger, alpha: u32) -> f64 {
    ledger
        .entries
        .iter()
        .map(|e| e.steps as f64 * rdp_per_round(e.z, alpha))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpGuarantee {
    pub epsilon: f64,
    pub alpha: u32,
}

/// Converts a ledger to `(ε, α*)` at the configured δ.
///
/// An empty ledger yields the pure penalty term, minimised at the largest
/// order in the grid.
pub fn rdp_to_dp(ledger: &ParticipationLedger, config: &AccountantConfig) -> Result<DpGuarantee> {
    config.validate()?;
    let mut best = DpGuarantee {
        epsilon: f64::INFINITY,
        alpha: 0,
    };
    for &alpha in &config.alpha_grid {
        let eps = compose(ledger, alpha) + config.penalty(alpha);
        if eps < best.epsilon || (eps == best.epsilon && alpha < best.alpha) {
            best = DpGuarantee { epsilon: eps, alpha };
        }
    }
    Ok(best)
}

/// Basic composition: `(Σ ε_t, |T|·δ_rd)`.
pub fn basic_composition(per_round_eps: &[f64], delta_rd: f64) -> (f64, f64) {
    (per_round_eps.iter().sum(), per_round_eps.len() as f64 * delta_rd)
}

/// Smallest constant noise multiplier whose uniform ledger of
/// `expected_rounds × steps_per_round` invocations stays within `target_eps`.
pub fn calibrate_constant_z(
    target_eps: f64,
    expected_rounds: usize,
    steps_per_round: usize,
    config: &AccountantConfig,
) -> Result<f64> {
    config.validate()?;
    if !(target_eps > 0.0 && target_eps.is_finite()) {
        return Err(Error::Domain(format!(
            "target epsilon must be positive, got {target_eps}"
        )));
    }
    if expected_rounds == 0 || steps_per_round == 0 {
        return Err(Error::Domain(
            "calibration needs at least one round and one step".into(),
        ));
    }
    let invocations = (expected_rounds * steps_per_round) as f64;
    let eps_at = |z: f64| -> f64 {
        let unit = invocations / (2.0 * z * z);
        config
            .alpha_grid
            .iter()
            .map(|&a| unit * a as f64 + config.penalty(a))
            .fold(f64::INFINITY, f64::min)
    };
    let floor = config
        .alpha_grid
        .iter()
        .map(|&a| config.penalty(a))
        .fold(f64::INFINITY, f64::min);
    if target_eps <= floor {
        return Err(Error::Calibration(format!(
            "target epsilon {target_eps} is unreachable: the alpha grid bottoms out at {floor:.6} for delta {} as z grows",
            config.delta
        )));
    }

    let mut hi = 1.0;
    let mut doublings = 0;
    while eps_at(hi) > target_eps {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::Calibration(format!(
                "no z up to {hi:e} reaches epsilon {target_eps} (eps there: {})",
                eps_at(hi)
            )));
        }
    }
    let mut lo = hi / 2.0;
    let mut halvings = 0;
    while eps_at(lo) <= target_eps {
        lo /= 2.0;
        halvings += 1;
        if halvings > 200 {
            return Err(Error::Calibration(format!(
                "lower bracket collapsed below {lo:e} for epsilon {target_eps}"
            )));
        }
    }
    while (hi - lo) / hi > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if eps_at(mid) <= target_eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientEpsilon {
    pub client_id: usize,
    pub epsilon: f64,
    pub alpha: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountingReport {
    pub per_client: Vec<ClientEpsilon>,
    /// `None` when there are no ledgers.
    pub summary: Option<EpsilonSummary>,
}

/// Per-client ε and the min / lower-median / max across clients.
pub fn final_report(ledgers: &[ParticipationLedger], config: &AccountantConfig) -> Result<AccountingReport> {
    let per_client = ledgers
        .iter()
        .map(|l| {
            rdp_to_dp(l, config).map(|g| ClientEpsilon {
                client_id: l.client_id,
                epsilon: g.epsilon,
                alpha: g.alpha,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut eps: Vec<f64> = per_client.iter().map(|c| c.epsilon).collect();
    eps.sort_by(f64::total_cmp);
    let summary = (!eps.is_empty()).then(|| EpsilonSummary {
        min: eps[0],
        median: eps[(eps.len() - 1) / 2],
        max: eps[eps.len() - 1],
    });
    Ok(AccountingReport { per_client, summary })
}

pub const LEDGER_HEADER: &str = "client_id,round,z,steps";

/// Writes one line per ledger entry, `z` at 9 significant digits.
pub fn write_ledgers<W: Write>(mut out: W, ledgers: &[ParticipationLedger]) -> Result<()> {
    writeln!(out, "{LEDGER_HEADER}")?;
    for l in ledgers {
        for e in &l.entries {
            writeln!(out, "{},{},{},{}", l.client_id, e.round, sig9(e.z), e.steps)?;
        }
    }
    Ok(())
}

/// Parses a ledger export; clients are returned in ascending id order.
/// Blank lines and `#` comments are ignored; the header is optional.
pub fn read_ledgers<R: BufRead>(input: R) -> Result<Vec<ParticipationLedger>> {
    let mut by_client: BTreeMap<usize, ParticipationLedger> = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') || text == LEDGER_HEADER {
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        let bad = |message: String| Error::Parse { line: line_no, message };
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let client: usize = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad client_id {:?}", fields[0])))?;
        let round: usize = fields[1]
            .parse()
            .map_err(|_| bad(format!("bad round {:?}", fields[1])))?;
        let z: f64 = fields[2].parse().map_err(|_| bad(format!("bad z {:?}", fields[2])))?;
        let steps: usize = fields[3]
            .parse()
            .map_err(|_| bad(format!("bad steps {:?}", fields[3])))?;
        let entry = LedgerEntry::new(round, z, steps).map_err(|e| bad(e.to_string()))?;
        by_client
            .entry(client)
            .or_insert_with(|| ParticipationLedger::new(client))
            .record(entry)
            .map_err(|e| bad(e.to_string()))?;
    }
    Ok(by_client.into_values().collect())
}
