//! Shared fixtures for the criterion benches.

use pacdp_core::federation::build_clients;
use pacdp_core::fitting::{SimConfig, SupportPoint};
use pacdp_core::numerics::{gen_synthetic, partition_noniid, SyntheticTask};
use pacdp_core::rng::{stream, Domain};
use pacdp_core::{
    AccountantConfig, ClientProfile, ClipBound, ClippingPolicy, FederationConfig, GridSpec, LocalDataset, ModelSpec,
    ParamVector, ParticipationLedger,
};
use rand::Rng;

/// `n` Gaussian-ish vectors of dimension `d` with norms around `sqrt(d)`.
pub fn gradients(n: usize, d: usize, seed: u64) -> Vec<ParamVector> {
    let mut rng = stream(seed, Domain::Aux, &[n as u64, d as u64]);
    (0..n)
        .map(|_| ParamVector::new((0..d).map(|_| rng.random_range(-1.7..1.7)).collect()).unwrap())
        .collect()
}

pub fn long_ledger(rounds: usize) -> ParticipationLedger {
    let mut rng = stream(5, Domain::Aux, &[rounds as u64]);
    let mut ledger = ParticipationLedger::new(0);
    for t in 0..rounds {
        ledger
            .record(pacdp_core::LedgerEntry::new(t, rng.random_range(0.5..3.0), 1).unwrap())
            .unwrap();
    }
    ledger
}

pub fn logistic_config(rounds: usize, sampled: usize) -> FederationConfig {
    FederationConfig {
        sampled,
        rounds,
        local_steps: 1,
        batch_size: 32,
        learning_rate: 0.5,
        model: ModelSpec::LogisticBinary { input_dim: 10 },
        policy: ClippingPolicy::Fixed(ClipBound::new(1.0).unwrap()),
        accountant: AccountantConfig::default(),
        renormalize: true,
        seed: 1,
    }
}

/// Non-IID logistic clients with budgets cycling through {1, 3, 10}, plus
/// an evaluation set.
pub fn logistic_federation(clients: usize, config: &FederationConfig) -> (Vec<ClientProfile>, LocalDataset) {
    let data = gen_synthetic(SyntheticTask::LogisticPlanted, 200 * clients, 10, 3).unwrap();
    let (train, eval) = data.split_holdout(0.2, 3).unwrap();
    let parts = partition_noniid(&train, clients, 0.8, 3).unwrap();
    let budgets: Vec<f64> = (0..clients).map(|i| [1.0, 3.0, 10.0][i % 3]).collect();
    (build_clients(parts, &budgets, config).unwrap(), eval)
}

pub fn small_grid() -> (LocalDataset, GridSpec) {
    let proxy = gen_synthetic(SyntheticTask::LogisticPlanted, 1000, 10, 9).unwrap();
    let grid = GridSpec {
        eps_values: vec![1.0, 3.0, 10.0],
        clip_values: vec![0.1, 1.0, 10.0],
        sim: SimConfig {
            clients: 10,
            sampled: 5,
            rounds: 10,
            local_steps: 1,
            batch_size: 32,
            learning_rate: 0.5,
            model: ModelSpec::LogisticBinary { input_dim: 10 },
            skew: 0.5,
            holdout: 0.2,
            seeds_per_cell: 1,
            accountant: AccountantConfig::default(),
            renormalize: true,
            seed: 4,
        },
    };
    (proxy, grid)
}

pub fn noisy_support(n: usize) -> Vec<SupportPoint> {
    let mut rng = stream(6, Domain::Aux, &[n as u64]);
    (0..n)
        .map(|i| {
            let eps = 0.1 + 0.9 * i as f64 / (n - 1) as f64;
            SupportPoint {
                eps,
                clip: -5.5235 * eps * eps + 12.0719 * eps + 1.4004 + rng.random_range(-0.2..0.2),
            }
        })
        .collect()
}
