//! Label-skewed client partitioning.
//!
//! For every class the share given to each client is a mixture
//! `(1 - skew) * uniform + skew * Dirichlet(0.1)`. At `skew = 0` every client
//! sees close to the global label mix; at `skew = 1` each client is dominated
//! by a few labels. Per-class counts use largest-remainder rounding so the
//! partition is exact.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};

use super::{Example, LocalDataset};
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

const DIRICHLET_CONCENTRATION: f64 = 0.1;

pub fn partition_noniid(data: &LocalDataset, clients: usize, skew: f64, seed: u64) -> Result<Vec<LocalDataset>> {
    if clients == 0 {
        return Err(Error::Domain("partition needs at least one client".into()));
    }
    if clients > data.len() {
        return Err(Error::Domain(format!(
            "cannot split {} examples across {clients} clients",
            data.len()
        )));
    }
    if !(0.0..=1.0).contains(&skew) {
        return Err(Error::Domain(format!("skew must lie in [0,1], got {skew}")));
    }
    if clients == 1 {
        return Ok(vec![data.clone()]);
    }

    let classes = data
        .examples()
        .iter()
        .map(|e| e.label.class_or_zero())
        .max()
        .unwrap_or(0)
        + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, e) in data.examples().iter().enumerate() {
        by_class[e.label.class_or_zero()].push(i);
    }

    let gamma = Gamma::new(DIRICHLET_CONCENTRATION, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); clients];
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut rng = stream(seed, Domain::Partition, &[c as u64, clients as u64]);
        members.shuffle(&mut rng);
        let draws: Vec<f64> = (0..clients).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        let shares: Vec<f64> = draws
            .iter()
            .map(|g| {
                let dir = if total > 0.0 { g / total } else { 1.0 / clients as f64 };
                (1.0 - skew) / clients as f64 + skew * dir
            })
            .collect();
        let counts = largest_remainder(&shares, members.len());
        let mut offset = 0;
        for (bucket, n) in buckets.iter_mut().zip(counts) {
            bucket.extend_from_slice(&members[offset..offset + n]);
            offset += n;
        }
    }

    // every client must hold at least one example
    while let Some(empty) = buckets.iter().position(|b| b.is_empty()) {
        let donor = (0..clients)
            .max_by_key(|&i| (buckets[i].len(), std::cmp::Reverse(i)))
            .expect("clients >= 1");
        let moved = buckets[donor].pop().expect("donor holds more than one example");
        buckets[empty].push(moved);
    }

    buckets
        .into_iter()
        .map(|ids| LocalDataset::new(ids.into_iter().map(|i| data.get(i).clone()).collect::<Vec<Example>>()))
        .collect()
}

fn largest_remainder(shares: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}
