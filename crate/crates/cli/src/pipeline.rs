//! Turning a validated config into datasets, clients and simulation specs.

use std::path::Path;

use pacdp_core::federation::build_clients;
use pacdp_core::fitting::SimConfig;
use pacdp_core::numerics::{gen_synthetic, load_csv, partition_noniid, SyntheticTask};
use pacdp_core::rng::{stream, Domain};
use pacdp_core::{ClientProfile, ClippingPolicy, FederationConfig, GridSpec, LocalDataset, ModelSpec};
use rand::seq::SliceRandom;

use crate::config::{DataSource, GridSection, RunConfig};
use crate::{CliError, CliResult};

fn load_source(source: &DataSource, n_override: Option<usize>, seed: u64) -> CliResult<LocalDataset> {
    let data = match source {
        DataSource::GaussBlobs { n, dim, classes } => gen_synthetic(
            SyntheticTask::GaussBlobs { classes: *classes },
            n_override.unwrap_or(*n),
            *dim,
            seed,
        )?,
        DataSource::LogisticPlanted { n, dim } => {
            gen_synthetic(SyntheticTask::LogisticPlanted, n_override.unwrap_or(*n), *dim, seed)?
        }
        DataSource::Quadratic { n, dim } => {
            gen_synthetic(SyntheticTask::Quadratic, n_override.unwrap_or(*n), *dim, seed)?
        }
        DataSource::Csv { path } => load_csv_at(path)?,
    };
    Ok(data)
}

fn load_csv_at(path: &Path) -> CliResult<LocalDataset> {
    if !path.exists() {
        return Err(CliError::at(path, "dataset file not found"));
    }
    load_csv(path).map_err(|e| CliError::at(path, e))
}

/// The model for this config, sized to the loaded data.
pub fn model_for(cfg: &RunConfig, data: &LocalDataset) -> CliResult<ModelSpec> {
    let spec = cfg.model.spec(data.dim())?;
    if let Some(classes) = spec.classes() {
        if data.num_classes() > classes {
            return Err(CliError::Config(crate::ConfigError::single(format!(
                "model.classes: data has {} classes but the model predicts {classes}",
                data.num_classes()
            ))));
        }
    }
    Ok(spec)
}

/// Training split per client plus the shared evaluation set.
pub struct TrainingData {
    pub clients: Vec<LocalDataset>,
    pub eval: LocalDataset,
    pub model: ModelSpec,
}

pub fn training_data(cfg: &RunConfig, seed: u64) -> CliResult<TrainingData> {
    let data = load_source(&cfg.dataset.source, None, seed)?;
    let model = model_for(cfg, &data)?;
    let (train, eval) = data.split_holdout(cfg.dataset.holdout, seed)?;
    if train.len() < cfg.federation.clients {
        return Err(CliError::Config(crate::ConfigError::single(format!(
            "dataset: {} training examples cannot cover federation.clients = {}",
            train.len(),
            cfg.federation.clients
        ))));
    }
    let clients = partition_noniid(&train, cfg.federation.clients, cfg.dataset.skew, seed)?;
    Ok(TrainingData { clients, eval, model })
}

/// One budget per client: level counts follow the configured proportions
/// (largest remainder), then levels are shuffled across clients.
pub fn assign_budgets(budgets: &[f64], proportions: &[f64], clients: usize, seed: u64) -> Vec<f64> {
    let exact: Vec<f64> = proportions.iter().map(|p| p * clients as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let short = clients - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    let mut out: Vec<f64> = budgets
        .iter()
        .zip(&counts)
        .flat_map(|(&b, &c)| std::iter::repeat_n(b, c))
        .collect();
    out.shuffle(&mut stream(seed, Domain::Budgets, &[clients as u64]));
    out
}

pub fn federation_config(cfg: &RunConfig, model: ModelSpec, policy: ClippingPolicy, seed: u64) -> FederationConfig {
    let f = &cfg.federation;
    FederationConfig {
        sampled: f.sampled,
        rounds: f.rounds,
        local_steps: f.local_steps,
        batch_size: f.batch_size,
        learning_rate: f.learning_rate,
        model,
        policy,
        accountant: cfg.privacy.accountant.clone(),
        renormalize: f.renormalize,
        seed,
    }
}

pub fn clients(cfg: &RunConfig, data: Vec<LocalDataset>, fed: &FederationConfig) -> CliResult<Vec<ClientProfile>> {
    fed.validate(data.len())?;
    let budgets = assign_budgets(&cfg.privacy.budgets, &cfg.privacy.proportions, data.len(), fed.seed);
    Ok(build_clients(data, &budgets, fed)?)
}

/// Proxy data and grid description for the offline fit.
pub fn grid_spec(cfg: &RunConfig, grid: &GridSection, seed: u64) -> CliResult<(LocalDataset, GridSpec)> {
    let proxy = match &grid.proxy_path {
        Some(path) => load_csv_at(path)?,
        None => load_source(&cfg.dataset.source, grid.proxy_n, grid.proxy_seed)?,
    };
    let model = model_for(cfg, &proxy)?;
    let f = &cfg.federation;
    let spec = GridSpec {
        eps_values: grid.eps.clone(),
        clip_values: grid.clips.clone(),
        sim: SimConfig {
            clients: grid.clients,
            sampled: grid.sampled,
            rounds: grid.rounds,
            local_steps: f.local_steps,
            batch_size: f.batch_size,
            learning_rate: f.learning_rate,
            model,
            skew: cfg.dataset.skew,
            holdout: cfg.dataset.holdout,
            seeds_per_cell: grid.seeds_per_cell,
            accountant: cfg.privacy.accountant.clone(),
            renormalize: f.renormalize,
            seed,
        },
    };
    spec.validate()?;
    Ok((proxy, spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_levels_follow_proportions() {
        let b = assign_budgets(&[1.0, 3.0, 10.0], &[0.6, 0.3, 0.1], 20, 4);
        let count = |v: f64| b.iter().filter(|&&x| x == v).count();
        assert_eq!((count(1.0), count(3.0), count(10.0)), (12, 6, 2));
        assert_eq!(b, assign_budgets(&[1.0, 3.0, 10.0], &[0.6, 0.3, 0.1], 20, 4));
    }

    #[test]
    fn largest_remainder_fills_every_client() {
        for n in 1..40 {
            let b = assign_budgets(&[1.0, 2.0, 3.0], &[0.5, 0.3, 0.2], n, 1);
            assert_eq!(b.len(), n);
        }
    }
}
