//! Federated training with record-level local DP.
//!
//! Each round the server samples `K` of `N` clients. A sampled client runs
//! `E` noised DP-SGD steps on its own data: sample a minibatch, clip every
//! per-example gradient at the policy's bound, average, add Gaussian noise
//! with the client's multiplier and step. Only the resulting local
//! parameters leave [`local_update`]; the server combines them by weighted
//! averaging. Every noised step is written to the client's ledger.
//!
//! Randomness for client sampling and for every local step comes from keyed
//! streams, so a run is bit-identical however the client updates are
//! scheduled across threads.

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;

use crate::accountant::{calibrate_constant_z, AccountantConfig, LedgerEntry, ParticipationLedger};
use crate::error::{Error, Result};
use crate::fitting::FitResult;
use crate::fmt::ceil9;
use crate::mechanism::{average_clipped, gaussian_perturb, ClipBound, NoiseSpec};
use crate::numerics::{accuracy, dataset_loss, init_model, per_example_gradient, LocalDataset, ModelSpec, ParamVector};
use crate::rng::{stream, Domain, StreamRng};
use crate::schedule::{clip_bound, ScheduleParams};

/// Online quantile-tracking clip bound shared by all clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileState {
    pub quantile: f64,
    pub clip: f64,
    pub lr: f64,
}

impl QuantileState {
    pub fn new(quantile: f64, initial_clip: f64, lr: f64) -> Result<Self> {
        if !(quantile > 0.0 && quantile < 1.0) {
            return Err(Error::Config(format!("quantile must lie in (0,1), got {quantile}")));
        }
        if !(initial_clip > 0.0 && initial_clip.is_finite()) {
            return Err(Error::Config(format!(
                "initial clip must be positive, got {initial_clip}"
            )));
        }
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("quantile learning rate must be >= 0, got {lr}")));
        }
        Ok(QuantileState {
            quantile,
            clip: initial_clip,
            lr,
        })
    }

    /// `C ← C · exp(−lr · (fraction_below − q))`.
    pub fn update_from_fraction(&self, fraction_below: f64) -> QuantileState {
        let clip = self.clip * (-self.lr * (fraction_below - self.quantile)).exp();
        QuantileState {
            clip: if clip > 0.0 && clip.is_finite() {
                clip
            } else {
                self.clip
            },
            ..*self
        }
    }
}

/// Quantile update from observed per-example norms. An empty list leaves
/// the state unchanged.
pub fn quantile_policy_update(state: &QuantileState, norms: &[f64]) -> QuantileState {
    if norms.is_empty() {
        return *state;
    }
    let below = norms.iter().filter(|&&n| n <= state.clip).count();
    state.update_from_fraction(below as f64 / norms.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClippingPolicy {
    /// Budget-conditioned bound `F(ε_i) · λ(t)`.
    PacDp { fit: FitResult, schedule: ScheduleParams },
    /// One global bound for every client and round.
    Fixed(ClipBound),
    /// Bound tracking a quantile of the per-example gradient norms.
    Quantile(QuantileState),
}

impl ClippingPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            ClippingPolicy::PacDp { .. } => "pacdp",
            ClippingPolicy::Fixed(_) => "fixed",
            ClippingPolicy::Quantile(_) => "quantile",
        }
    }

    pub fn bound(&self, eps: f64, t: usize) -> Result<ClipBound> {
        match self {
            ClippingPolicy::PacDp { fit, schedule } => clip_bound(eps, t, fit, schedule),
            ClippingPolicy::Fixed(c) => Ok(*c),
            ClippingPolicy::Quantile(q) => ClipBound::new(q.clip),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientProfile {
    pub id: usize,
    pub dataset: LocalDataset,
    pub eps_target: f64,
    pub z: f64,
    pub weight: f64,
    pub ledger: ParticipationLedger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub sampled: usize,
    pub rounds: usize,
    pub local_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub model: ModelSpec,
    pub policy: ClippingPolicy,
    pub accountant: AccountantConfig,
    /// Renormalise aggregation weights over the sampled clients.
    pub renormalize: bool,
    pub seed: u64,
}

impl FederationConfig {
    pub fn validate(&self, clients: usize) -> Result<()> {
        let mut problems = Vec::new();
        if clients == 0 {
            problems.push("at least one client is required".to_string());
        }
        if self.sampled == 0 || self.sampled > clients {
            problems.push(format!(
                "sampled clients K={} must satisfy 1 <= K <= N={clients}",
                self.sampled
            ));
        }
        if self.local_steps == 0 {
            problems.push("local_steps must be >= 1".into());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if let Err(e) = self.model.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.accountant.validate() {
            problems.push(e.to_string());
        }
        if let ClippingPolicy::PacDp { schedule, .. } = &self.policy {
            if let Err(e) = schedule.validate() {
                problems.push(e.to_string());
            }
            if self.rounds > 0 && schedule.total_rounds != self.rounds {
                problems.push(format!(
                    "schedule covers {} rounds but training runs {}",
                    schedule.total_rounds, self.rounds
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Rounds a client is expected to join, rounded up: `⌈T·K/N⌉`.
    pub fn expected_rounds(&self, clients: usize) -> usize {
        (self.rounds * self.sampled).div_ceil(clients.max(1)).max(1)
    }
}

/// Builds client profiles with dataset-size weights and a constant noise
/// multiplier calibrated to each budget over the expected participation.
pub fn build_clients(
    datasets: Vec<LocalDataset>,
    budgets: &[f64],
    config: &FederationConfig,
) -> Result<Vec<ClientProfile>> {
    if datasets.len() != budgets.len() {
        return Err(Error::Shape {
            expected: datasets.len(),
            actual: budgets.len(),
            context: "one privacy budget per client",
        });
    }
    let total: usize = datasets.iter().map(LocalDataset::len).sum();
    let expected = config.expected_rounds(datasets.len());
    datasets
        .into_iter()
        .zip(budgets)
        .enumerate()
        .map(|(id, (dataset, &eps))| {
            // rounded up so the ledger export holds exactly the multiplier used
            let z = ceil9(calibrate_constant_z(
                eps,
                expected,
                config.local_steps,
                &config.accountant,
            )?);
            Ok(ClientProfile {
                id,
                weight: dataset.len() as f64 / total as f64,
                dataset,
                eps_target: eps,
                z,
                ledger: ParticipationLedger::new(id),
            })
        })
        .collect()
}

/// Uniform sample of `k` distinct client indices out of `n`, ascending.
pub fn sample_clients<R: rand::Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::Domain(format!("cannot sample {k} of {n} clients")));
    }
    let mut ids = index::sample(rng, n, k).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// What a client sends back after a round.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub params: ParamVector,
    pub ledger_delta: Vec<LedgerEntry>,
    pub clip: ClipBound,
    /// Per-example gradients at or under the bound, and gradients seen.
    /// Only the quantile baseline reads these counts.
    pub below_clip: usize,
    pub seen: usize,
}

fn step_rng(seed: u64, client: usize, round: usize, step: u64) -> StreamRng {
    stream(seed, Domain::LocalStep, &[client as u64, round as u64, step])
}

const BATCH_ORDER: u64 = u64::MAX;

pub fn local_update(
    client: &ClientProfile,
    w_global: &ParamVector,
    policy: &ClippingPolicy,
    t: usize,
    config: &FederationConfig,
) -> Result<LocalOutcome> {
    let clip = policy.bound(client.eps_target, t)?;
    let n = client.dataset.len();
    let batch = config.batch_size.min(n);
    let noise = NoiseSpec::new(client.z, batch, clip)?;

    let mut order_rng = step_rng(config.seed, client.id, t, BATCH_ORDER);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut order_rng);
    let mut cursor = 0;

    let mut w = w_global.to_vec();
    let mut ledger_delta = Vec::with_capacity(config.local_steps);
    let (mut below_clip, mut seen) = (0, 0);
    for step in 0..config.local_steps {
        if cursor + batch > n {
            order.shuffle(&mut order_rng);
            cursor = 0;
        }
        let params = ParamVector::new(w.clone())?;
        let grads = order[cursor..cursor + batch]
            .iter()
            .map(|&i| per_example_gradient(&config.model, &params, client.dataset.get(i)))
            .collect::<Result<Vec<_>>>()?;
        cursor += batch;
        below_clip += grads.iter().filter(|g| g.norm() <= clip.value()).count();
        seen += grads.len();

        let gbar = average_clipped(&grads, clip)?;
        let mut rng = step_rng(config.seed, client.id, t, step as u64);
        let noised = gaussian_perturb(&gbar, &noise, &mut rng)?;
        for (wi, gi) in w.iter_mut().zip(noised.iter()) {
            *wi -= config.learning_rate * gi;
        }
        ledger_delta.push(LedgerEntry::new(t, client.z, 1)?);
    }
    let params =
        ParamVector::new(w).map_err(|e| Error::Numeric(format!("client {} diverged in round {t}: {e}", client.id)))?;
    Ok(LocalOutcome {
        params,
        ledger_delta,
        clip,
        below_clip,
        seen,
    })
}

/// Weighted combination of client parameters. With `renormalize` the weights
/// are rescaled to sum to one; otherwise they are used as given.
pub fn aggregate(updates: &[(f64, ParamVector)], renormalize: bool) -> Result<ParamVector> {
    let (_, first) = updates
        .first()
        .ok_or_else(|| Error::Domain("nothing to aggregate".into()))?;
    let dim = first.len();
    let total: f64 = updates.iter().map(|(w, _)| w).sum();
    if renormalize && (total.is_nan() || total <= 0.0) {
        return Err(Error::Domain("aggregation weights sum to zero".into()));
    }
    let scale = if renormalize { 1.0 / total } else { 1.0 };
    let mut acc = vec![0.0; dim];
    for (weight, v) in updates {
        if v.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                actual: v.len(),
                context: "aggregated parameters",
            });
        }
        let w = weight * scale;
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += w * x;
        }
    }
    ParamVector::new(acc)
}

/// Telemetry of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub sampled: Vec<usize>,
    pub clip_bounds: Vec<f64>,
    pub loss: f64,
    /// `None` for regression-type models.
    pub accuracy: Option<f64>,
    pub update_norm: f64,
    pub messages: usize,
    pub floats: usize,
    pub failed: Vec<usize>,
}

impl RoundRecord {
    pub fn mean_clip(&self) -> f64 {
        if self.clip_bounds.is_empty() {
            0.0
        } else {
            self.clip_bounds.iter().sum::<f64>() / self.clip_bounds.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutput {
    pub params: ParamVector,
    pub history: Vec<RoundRecord>,
    pub ledgers: Vec<ParticipationLedger>,
    pub policy: ClippingPolicy,
}

/// Runs `config.rounds` rounds over `clients`, evaluating on `eval` after
/// every round. Client ledgers are filled in place.
pub fn run_training(
    config: &FederationConfig,
    clients: &mut [ClientProfile],
    eval: &LocalDataset,
) -> Result<TrainingOutput> {
    config.validate(clients.len())?;
    for (i, c) in clients.iter().enumerate() {
        if c.id != i {
            return Err(Error::Config(format!("client at position {i} has id {}", c.id)));
        }
    }
    let d = config.model.param_count();
    let mut w = init_model(&config.model, config.seed)?;
    let mut policy = config.policy.clone();
    let mut history = Vec::with_capacity(config.rounds);

    for t in 0..config.rounds {
        let mut rng = stream(config.seed, Domain::ClientSampling, &[t as u64]);
        let sampled = sample_clients(clients.len(), config.sampled, &mut rng)?;
        let outcomes: Vec<Result<LocalOutcome>> = sampled
            .par_iter()
            .map(|&i| local_update(&clients[i], &w, &policy, t, config))
            .collect();

        let mut uploads = Vec::with_capacity(sampled.len());
        let mut clip_bounds = Vec::with_capacity(sampled.len());
        let mut failed = Vec::new();
        let (mut below, mut seen) = (0usize, 0usize);
        for (&i, outcome) in sampled.iter().zip(outcomes) {
            match outcome {
                Ok(out) => {
                    for entry in &out.ledger_delta {
                        clients[i].ledger.record(*entry)?;
                    }
                    clip_bounds.push(out.clip.value());
                    below += out.below_clip;
                    seen += out.seen;
                    uploads.push((clients[i].weight, out.params));
                }
                Err(Error::Numeric(_)) => {
                    failed.push(i);
                    clip_bounds.push(policy.bound(clients[i].eps_target, t)?.value());
                }
                Err(e) => return Err(e),
            }
        }

        let next = if uploads.is_empty() {
            w.clone()
        } else {
            aggregate(&uploads, config.renormalize)?
        };
        let update_norm = next.sub(&w)?.norm();
        w = next;

        if let ClippingPolicy::Quantile(state) = &mut policy {
            if seen > 0 {
                *state = state.update_from_fraction(below as f64 / seen as f64);
            }
        }

        let loss = dataset_loss(&config.model, &w, eval)?;
        let acc = if config.model.is_classifier() {
            Some(accuracy(&config.model, &w, eval)?)
        } else {
            None
        };
        history.push(RoundRecord {
            round: t,
            messages: sampled.len(),
            floats: sampled.len() * d,
            sampled,
            clip_bounds,
            loss,
            accuracy: acc,
            update_norm,
            failed,
        });
    }

    Ok(TrainingOutput {
        params: w,
        history,
        ledgers: clients.iter().map(|c| c.ledger.clone()).collect(),
        policy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommunicationReport {
    pub messages: usize,
    pub floats: usize,
    pub mean_messages: f64,
    pub mean_floats: f64,
}

/// Upload counts summed over a history.
pub fn communication_report(history: &[RoundRecord]) -> CommunicationReport {
    let messages: usize = history.iter().map(|r| r.messages).sum();
    let floats: usize = history.iter().map(|r| r.floats).sum();
    let rounds = history.len().max(1) as f64;
    CommunicationReport {
        messages,
        floats,
        mean_messages: if history.is_empty() {
            0.0
        } else {
            messages as f64 / rounds
        },
        mean_floats: if history.is_empty() {
            0.0
        } else {
            floats as f64 / rounds
        },
    }
}
