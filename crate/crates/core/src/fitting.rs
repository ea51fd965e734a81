//! Offline fitting of the budget-to-threshold map `F(ε) = αε² + βε + γ`.
//!
//! The pipeline simulates federated DP training on a proxy dataset for every
//! `(ε, C)` pair of a grid, keeps the best-performing `C` per budget, drops
//! outlying thresholds with an IQR rule and fits a quadratic by least
//! squares. Evaluation is clamped below by a positive floor and can
//! optionally be replaced by its running maximum so the map never decreases
//! over a chosen budget range.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::AccountantConfig;
use crate::error::{Error, Result};
use crate::federation::{build_clients, run_training, ClippingPolicy, FederationConfig};
use crate::mechanism::ClipBound;
use crate::numerics::{partition_noniid, LocalDataset, ModelSpec};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub eps: f64,
    pub clip: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionClass {
    #[default]
    Quadratic,
}

/// Budget range over which evaluation uses the non-decreasing envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneRange {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(default)]
    pub function_class: FunctionClass,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub r2: f64,
    pub clamp_floor: f64,
    pub support: Vec<SupportPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monotone: Option<MonotoneRange>,
    /// Set when IQR filtering would have left fewer than three points.
    #[serde(default)]
    pub iqr_skipped: bool,
}

impl FitResult {
    /// A fit with known coefficients and no support data.
    pub fn from_coefficients(alpha: f64, beta: f64, gamma: f64, clamp_floor: f64) -> Self {
        FitResult {
            function_class: FunctionClass::Quadratic,
            alpha,
            beta,
            gamma,
            r2: 1.0,
            clamp_floor,
            support: Vec::new(),
            monotone: None,
            iqr_skipped: false,
        }
    }

    /// The unclamped polynomial.
    pub fn raw(&self, eps: f64) -> f64 {
        (self.alpha * eps + self.beta) * eps + self.gamma
    }

    /// Running maximum of the polynomial over `[lo, x]`.
    fn running_max(&self, lo: f64, x: f64) -> f64 {
        let mut best = self.raw(lo).max(self.raw(x));
        if self.alpha < 0.0 {
            let vertex = -self.beta / (2.0 * self.alpha);
            if vertex > lo && vertex < x {
                best = best.max(self.raw(vertex));
            }
        }
        best
    }

    fn shaped(&self, eps: f64) -> f64 {
        match self.monotone {
            None => self.raw(eps),
            Some(MonotoneRange { lo, hi }) => {
                if eps < lo {
                    self.raw(eps).min(self.raw(lo))
                } else if eps <= hi {
                    self.running_max(lo, eps)
                } else {
                    self.running_max(lo, hi).max(self.raw(eps))
                }
            }
        }
    }

    /// `F(ε)`, never below `clamp_floor`.
    pub fn evaluate(&self, eps: f64) -> f64 {
        let v = self.shaped(eps);
        if v.is_nan() {
            self.clamp_floor
        } else {
            v.max(self.clamp_floor)
        }
    }

    pub fn with_clamp_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::Config(format!("clamp_floor must be positive, got {floor}")));
        }
        self.clamp_floor = floor;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = [self.alpha, self.beta, self.gamma];
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("fit coefficients must be finite".into()));
        }
        if !(self.clamp_floor > 0.0 && self.clamp_floor.is_finite()) {
            return Err(Error::Config(format!(
                "clamp_floor must be positive, got {}",
                self.clamp_floor
            )));
        }
        if self.r2 > 1.0 + 1e-12 || self.r2.is_nan() {
            return Err(Error::Config(format!("r2 must not exceed 1, got {}", self.r2)));
        }
        if let Some(MonotoneRange { lo, hi }) = self.monotone {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::Config("monotone range must satisfy lo < hi".into()));
            }
        }
        Ok(())
    }
}

/// Federated simulation recipe shared by every grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub clients: usize,
    pub sampled: usize,
    pub rounds: usize,
    pub local_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub model: ModelSpec,
    pub skew: f64,
    pub holdout: f64,
    pub seeds_per_cell: usize,
    pub accountant: AccountantConfig,
    pub renormalize: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub eps_values: Vec<f64>,
    pub clip_values: Vec<f64>,
    pub sim: SimConfig,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let check = |name: &str, v: &[f64], min: usize, problems: &mut Vec<String>| {
            if v.len() < min {
                problems.push(format!("{name} needs at least {min} values, got {}", v.len()));
            }
            if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                problems.push(format!("{name} values must be positive and finite"));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                problems.push(format!("{name} must be strictly increasing"));
            }
        };
        check("eps_values", &self.eps_values, 3, &mut problems);
        check("clip_values", &self.clip_values, 2, &mut problems);
        if self.sim.seeds_per_cell == 0 {
            problems.push("seeds_per_cell must be >= 1".into());
        }
        if !self.sim.model.is_classifier() {
            problems.push("grid simulation needs a classification model".into());
        }
        if !(self.sim.holdout > 0.0 && self.sim.holdout < 1.0) {
            problems.push(format!("holdout must lie in (0,1), got {}", self.sim.holdout));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// A cell run that diverged and was scored at chance level.
#[derive(Debug, Clone, PartialEq)]
pub struct FailedRun {
    pub row: usize,
    pub col: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceMatrix {
    pub eps_values: Vec<f64>,
    pub clip_values: Vec<f64>,
    /// `accuracy[i][j]` for budget `i` and threshold `j`.
    pub accuracy: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
    pub failures: Vec<FailedRun>,
}

impl PerformanceMatrix {
    pub fn new(eps_values: Vec<f64>, clip_values: Vec<f64>, accuracy: Vec<Vec<f64>>) -> Result<Self> {
        if accuracy.len() != eps_values.len() || accuracy.iter().any(|r| r.len() != clip_values.len()) {
            return Err(Error::Shape {
                expected: eps_values.len() * clip_values.len(),
                actual: accuracy.iter().map(Vec::len).sum(),
                context: "performance matrix",
            });
        }
        if accuracy.iter().flatten().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Domain("accuracies must lie in [0,1]".into()));
        }
        Ok(PerformanceMatrix {
            eps_values,
            clip_values,
            accuracy,
            seeds: Vec::new(),
            failures: Vec::new(),
        })
    }
}

fn cell_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut rng = stream(master, Domain::GridCell, &[count as u64]);
    (0..count).map(|_| rng.random()).collect()
}

/// Runs the federated simulation for every grid cell on the proxy data and
/// records the seed-averaged final test accuracy.
///
/// Seed `s` of every cell uses the same partition and training seed, so
/// cells differ only in `(ε, C)`.
pub fn simulate_grid(proxy: &LocalDataset, grid: &GridSpec) -> Result<PerformanceMatrix> {
    grid.validate()?;
    let sim = &grid.sim;
    let classes = sim.model.classes().expect("validated classifier");
    let chance = 1.0 / classes as f64;
    let seeds = cell_seeds(sim.seed, sim.seeds_per_cell);

    let (train, test) = proxy.split_holdout(sim.holdout, sim.seed)?;
    let partitions = seeds
        .iter()
        .map(|&s| partition_noniid(&train, sim.clients, sim.skew, s))
        .collect::<Result<Vec<_>>>()?;

    let (n, m, k) = (grid.eps_values.len(), grid.clip_values.len(), seeds.len());
    let runs: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|i| (0..m).flat_map(move |j| (0..k).map(move |s| (i, j, s))))
        .collect();
    let outcomes = runs
        .par_iter()
        .map(|&(i, j, s)| -> Result<std::result::Result<f64, String>> {
            let config = FederationConfig {
                sampled: sim.sampled,
                rounds: sim.rounds,
                local_steps: sim.local_steps,
                batch_size: sim.batch_size,
                learning_rate: sim.learning_rate,
                model: sim.model.clone(),
                policy: ClippingPolicy::Fixed(ClipBound::new(grid.clip_values[j])?),
                accountant: sim.accountant.clone(),
                renormalize: sim.renormalize,
                seed: seeds[s],
            };
            let budgets = vec![grid.eps_values[i]; sim.clients];
            let mut clients = build_clients(partitions[s].clone(), &budgets, &config)?;
            match run_training(&config, &mut clients, &test) {
                Ok(out) => match out.history.last() {
                    Some(r) if r.loss.is_finite() => Ok(Ok(r.accuracy.unwrap_or(chance))),
                    Some(r) => Ok(Err(format!("non-finite loss {}", r.loss))),
                    None => Ok(Ok(chance)),
                },
                Err(Error::Numeric(msg)) => Ok(Err(msg)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut accuracy = vec![vec![0.0; m]; n];
    let mut failures = Vec::new();
    for (&(i, j, s), outcome) in runs.iter().zip(outcomes) {
        let acc = match outcome {
            Ok(a) => a,
            Err(reason) => {
                failures.push(FailedRun {
                    row: i,
                    col: j,
                    seed: seeds[s],
                    reason,
                });
                chance
            }
        };
        accuracy[i][j] += acc / k as f64;
    }
    let mut matrix = PerformanceMatrix::new(grid.eps_values.clone(), grid.clip_values.clone(), accuracy)?;
    matrix.seeds = seeds;
    matrix.failures = failures;
    Ok(matrix)
}

/// Best threshold per budget; ties go to the smaller threshold.
pub fn select_optimal(matrix: &PerformanceMatrix) -> Vec<SupportPoint> {
    matrix
        .eps_values
        .iter()
        .zip(&matrix.accuracy)
        .map(|(&eps, row)| {
            let mut best = 0;
            for (j, &a) in row.iter().enumerate() {
                let better = a > row[best] || (a == row[best] && matrix.clip_values[j] < matrix.clip_values[best]);
                if better {
                    best = j;
                }
            }
            SupportPoint {
                eps,
                clip: matrix.clip_values[best],
            }
        })
        .collect()
}

/// Linear-interpolation quantile of sorted data (position `(n − 1) p`).
pub fn quantile_inclusive(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqrOutcome {
    pub kept: Vec<SupportPoint>,
    pub dropped: usize,
    /// The rule would have left fewer than three points, so nothing was dropped.
    pub skipped: bool,
}

/// Drops points whose threshold lies outside `[Q1 − 1.5 IQR, Q3 + 1.5 IQR]`.
pub fn iqr_filter(points: &[SupportPoint]) -> IqrOutcome {
    if points.is_empty() {
        return IqrOutcome {
            kept: Vec::new(),
            dropped: 0,
            skipped: false,
        };
    }
    let mut sorted: Vec<f64> = points.iter().map(|p| p.clip).collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_inclusive(&sorted, 0.25);
    let q3 = quantile_inclusive(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let kept: Vec<SupportPoint> = points
        .iter()
        .copied()
        .filter(|p| p.clip >= lo && p.clip <= hi)
        .collect();
    if kept.len() < 3 && kept.len() < points.len() {
        return IqrOutcome {
            kept: points.to_vec(),
            dropped: 0,
            skipped: true,
        };
    }
    IqrOutcome {
        dropped: points.len() - kept.len(),
        kept,
        skipped: false,
    }
}

/// Least-squares quadratic through `(ε, C*)` points.
///
/// Solved by QR (modified Gram–Schmidt) on the centred and scaled basis
/// `1, u, u²` with `u = (ε − mean) / spread`, then mapped back to raw
/// coefficients. `clamp_floor` defaults to the smallest supported threshold.
pub fn fit_quadratic(points: &[SupportPoint]) -> Result<FitResult> {
    if points.iter().any(|p| !p.eps.is_finite() || !p.clip.is_finite()) {
        return Err(Error::Fit("support points must be finite".into()));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.eps).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit(format!(
            "a quadratic needs at least 3 distinct budgets, got {}",
            distinct.len()
        )));
    }
    let n = points.len();
    let mean = points.iter().map(|p| p.eps).sum::<f64>() / n as f64;
    let spread = points.iter().map(|p| (p.eps - mean).abs()).fold(0.0, f64::max);
    let u: Vec<f64> = points.iter().map(|p| (p.eps - mean) / spread).collect();
    let y: Vec<f64> = points.iter().map(|p| p.clip).collect();

    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n], u.clone(), u.iter().map(|v| v * v).collect()];
    let col_norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut r = [[0.0f64; 3]; 3];
    for j in 0..3 {
        for i in 0..j {
            let proj: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            r[i][j] = proj;
            let qi = cols[i].clone();
            for (v, q) in cols[j].iter_mut().zip(&qi) {
                *v -= proj * q;
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 * col_norms[j] {
            return Err(Error::Fit(format!(
                "design matrix is rank deficient (column {j} residual norm {norm:e}, original {:e})",
                col_norms[j]
            )));
        }
        r[j][j] = norm;
        cols[j].iter_mut().for_each(|v| *v /= norm);
    }
    let diag = [r[0][0], r[1][1], r[2][2]];
    let cond = diag.iter().cloned().fold(0.0, f64::max) / diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if cond > 1e12 {
        return Err(Error::Fit(format!(
            "design matrix is ill-conditioned (R-diagonal ratio {cond:e})"
        )));
    }
    let qty: Vec<f64> = cols
        .iter()
        .map(|q| q.iter().zip(&y).map(|(a, b)| a * b).sum())
        .collect();
    let mut c = [0.0f64; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| r[i][k] * c[k]).sum();
        c[i] = (qty[i] - s) / r[i][i];
    }

    // c0 + c1 u + c2 u², u = (ε − m)/h
    let (m, h) = (mean, spread);
    let alpha = c[2] / (h * h);
    let beta = c[1] / h - 2.0 * c[2] * m / (h * h);
    let gamma = c[0] - c[1] * m / h + c[2] * m * m / (h * h);

    let fitted = |e: f64| (alpha * e + beta) * e + gamma;
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let ss_res: f64 = points.iter().map(|p| (p.clip - fitted(p.eps)).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-24 {
        1.0
    } else {
        0.0
    };
    let floor = y.iter().cloned().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    Ok(FitResult {
        function_class: FunctionClass::Quadratic,
        alpha,
        beta,
        gamma,
        r2,
        clamp_floor: if floor.is_finite() { floor } else { f64::MIN_POSITIVE },
        support: points.to_vec(),
        monotone: None,
        iqr_skipped: false,
    })
}

/// Makes evaluation non-decreasing on `[lo, hi]` by holding the running
/// maximum. A fit that already increases there is returned unchanged.
pub fn monotone_project(fit: &FitResult, lo: f64, hi: f64) -> Result<FitResult> {
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Domain(format!("monotone range needs lo < hi, got [{lo}, {hi}]")));
    }
    let slope = |e: f64| 2.0 * fit.alpha * e + fit.beta;
    let mut out = fit.clone();
    out.monotone = if slope(lo) >= 0.0 && slope(hi) >= 0.0 {
        None
    } else {
        Some(MonotoneRange { lo, hi })
    };
    Ok(out)
}

/// Sum of squared residuals of arbitrary coefficients on a support set.
pub fn residual_sum_of_squares(alpha: f64, beta: f64, gamma: f64, points: &[SupportPoint]) -> f64 {
    points
        .iter()
        .map(|p| (p.clip - ((alpha * p.eps + beta) * p.eps + gamma)).powi(2))
        .sum()
}
