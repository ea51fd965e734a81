//! Run configuration: a single TOML file with nested sections.
//!
//! Parsing is strict. Duplicate keys, unknown keys, missing required fields
//! and out-of-range values are all reported together, each prefixed with its
//! dotted path. The only defaults are
//! `schedule.r_s = 0.6`, `schedule.lambda_min = 0.1`, `privacy.delta = 1e-5`,
//! `privacy.alpha_grid = 2..=64`, `grid.seeds_per_cell = 3`,
//! `grid.monotone = false` and `federation.renormalize = true`.

use std::fmt;
use std::path::{Path, PathBuf};

use pacdp_core::accountant::AccountantConfig;
use pacdp_core::numerics::QuadraticOracle;
use pacdp_core::{ModelSpec, ScheduleParams};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl ConfigError {
    pub fn single(msg: impl Into<String>) -> Self {
        ConfigError {
            violations: vec![msg.into()],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

const SCHEMA: &[(&str, &[&str])] = &[
    (
        "",
        &[
            "seed",
            "out_dir",
            "dataset",
            "model",
            "federation",
            "privacy",
            "policy",
            "schedule",
            "grid",
        ],
    ),
    ("dataset", &["source", "n", "dim", "classes", "path", "skew", "holdout"]),
    ("model", &["kind", "hidden", "classes", "diag", "matrix", "b"]),
    (
        "federation",
        &[
            "clients",
            "sampled",
            "rounds",
            "local_steps",
            "batch_size",
            "learning_rate",
            "renormalize",
        ],
    ),
    ("privacy", &["delta", "alpha_grid", "budgets", "proportions"]),
    ("policy", &["kind", "clip", "quantile", "initial_clip", "quantile_lr"]),
    ("schedule", &["r_s", "lambda_min"]),
    (
        "grid",
        &[
            "eps",
            "clips",
            "seeds_per_cell",
            "proxy_n",
            "proxy_seed",
            "proxy_path",
            "rounds",
            "clients",
            "sampled",
            "monotone",
        ],
    ),
];

fn unknown_keys(table: &toml::Table, violations: &mut Vec<String>) {
    let allowed = |section: &str| SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k);
    for (key, value) in table {
        if !allowed("").unwrap().contains(&key.as_str()) {
            violations.push(format!("{key}: unknown key"));
            continue;
        }
        if let Some(keys) = allowed(key) {
            match value {
                toml::Value::Table(inner) => {
                    for k in inner.keys() {
                        if !keys.contains(&k.as_str()) {
                            violations.push(format!("{key}.{k}: unknown key"));
                        }
                    }
                }
                _ => violations.push(format!("{key}: expected a [{key}] section")),
            }
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct RawConfig {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    dataset: Option<RawDataset>,
    model: Option<RawModel>,
    federation: Option<RawFederation>,
    privacy: Option<RawPrivacy>,
    policy: Option<RawPolicy>,
    schedule: Option<RawSchedule>,
    grid: Option<RawGrid>,
}

#[derive(Debug, Default, Deserialize)]
struct RawDataset {
    source: Option<String>,
    n: Option<usize>,
    dim: Option<usize>,
    classes: Option<usize>,
    path: Option<PathBuf>,
    skew: Option<f64>,
    holdout: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawModel {
    kind: Option<String>,
    hidden: Option<usize>,
    classes: Option<usize>,
    diag: Option<Vec<f64>>,
    matrix: Option<Vec<Vec<f64>>>,
    b: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
struct RawFederation {
    clients: Option<usize>,
    sampled: Option<usize>,
    rounds: Option<usize>,
    local_steps: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    renormalize: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
struct RawPrivacy {
    delta: Option<f64>,
    alpha_grid: Option<Vec<u32>>,
    budgets: Option<Vec<f64>>,
    proportions: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
struct RawPolicy {
    kind: Option<String>,
    clip: Option<f64>,
    quantile: Option<f64>,
    initial_clip: Option<f64>,
    quantile_lr: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawSchedule {
    r_s: Option<f64>,
    lambda_min: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawGrid {
    eps: Option<Vec<f64>>,
    clips: Option<Vec<f64>>,
    seeds_per_cell: Option<usize>,
    proxy_n: Option<usize>,
    proxy_seed: Option<u64>,
    proxy_path: Option<PathBuf>,
    rounds: Option<usize>,
    clients: Option<usize>,
    sampled: Option<usize>,
    monotone: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    GaussBlobs { n: usize, dim: usize, classes: usize },
    LogisticPlanted { n: usize, dim: usize },
    Quadratic { n: usize, dim: usize },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecipe {
    pub source: DataSource,
    pub skew: f64,
    pub holdout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelRecipe {
    LinearRegression,
    LogisticBinary,
    SoftmaxLinear { classes: usize },
    Mlp1Hidden { hidden: usize, classes: usize },
    Quadratic(QuadraticOracle),
}

impl ModelRecipe {
    /// The concrete model for features of dimension `dim`.
    pub fn spec(&self, dim: usize) -> Result<ModelSpec, ConfigError> {
        let spec = match self {
            ModelRecipe::LinearRegression => ModelSpec::LinearRegression { input_dim: dim },
            ModelRecipe::LogisticBinary => ModelSpec::LogisticBinary { input_dim: dim },
            ModelRecipe::SoftmaxLinear { classes } => ModelSpec::SoftmaxLinear {
                input_dim: dim,
                classes: *classes,
            },
            ModelRecipe::Mlp1Hidden { hidden, classes } => ModelSpec::Mlp1Hidden {
                input_dim: dim,
                hidden: *hidden,
                classes: *classes,
            },
            ModelRecipe::Quadratic(q) => {
                if q.dim() != dim {
                    return Err(ConfigError::single(format!(
                        "model.b: quadratic dimension {} does not match dataset dimension {dim}",
                        q.dim()
                    )));
                }
                ModelSpec::Quadratic(q.clone())
            }
        };
        spec.validate()
            .map_err(|e| ConfigError::single(format!("model: {e}")))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationSection {
    pub clients: usize,
    pub sampled: usize,
    pub rounds: usize,
    pub local_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub renormalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacySection {
    pub accountant: AccountantConfig,
    pub budgets: Vec<f64>,
    pub proportions: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PolicyKind {
    Pacdp,
    Fixed,
    Quantile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySection {
    pub kind: PolicyKind,
    pub clip: Option<f64>,
    pub quantile: Option<f64>,
    pub initial_clip: Option<f64>,
    pub quantile_lr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub eps: Vec<f64>,
    pub clips: Vec<f64>,
    pub seeds_per_cell: usize,
    pub proxy_n: Option<usize>,
    pub proxy_seed: u64,
    pub proxy_path: Option<PathBuf>,
    pub rounds: usize,
    pub clients: usize,
    pub sampled: usize,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetRecipe,
    pub model: ModelRecipe,
    pub federation: FederationSection,
    pub privacy: PrivacySection,
    pub policy: PolicySection,
    pub r_s: f64,
    pub lambda_min: f64,
    pub grid: Option<GridSection>,
}

impl RunConfig {
    pub fn schedule(&self) -> ScheduleParams {
        ScheduleParams {
            total_rounds: self.federation.rounds,
            r_s: self.r_s,
            lambda_min: self.lambda_min,
        }
    }
}

/// Collects violations while pulling required fields out of `Option`s.
struct Checker {
    violations: Vec<String>,
}

impl Checker {
    fn require<T>(&mut self, value: Option<T>, path: &str) -> Option<T> {
        if value.is_none() {
            self.violations.push(format!("{path}: missing required field"));
        }
        value
    }

    fn fail(&mut self, path: &str, msg: impl fmt::Display) {
        self.violations.push(format!("{path}: {msg}"));
    }

    fn positive(&mut self, value: Option<f64>, path: &str) -> Option<f64> {
        let v = self.require(value, path)?;
        if !(v > 0.0 && v.is_finite()) {
            self.fail(path, format!("must be positive and finite, got {v}"));
            return None;
        }
        Some(v)
    }

    fn at_least(&mut self, value: Option<usize>, min: usize, path: &str) -> Option<usize> {
        let v = self.require(value, path)?;
        if v < min {
            self.fail(path, format!("must be >= {min}, got {v}"));
            return None;
        }
        Some(v)
    }

    fn increasing_positive(&mut self, values: Option<Vec<f64>>, min_len: usize, path: &str) -> Option<Vec<f64>> {
        let v = self.require(values, path)?;
        let mut ok = true;
        if v.len() < min_len {
            self.fail(path, format!("needs at least {min_len} values, got {}", v.len()));
            ok = false;
        }
        if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            self.fail(path, "values must be positive and finite");
            ok = false;
        }
        if v.windows(2).any(|w| w[0] >= w[1]) {
            self.fail(path, "values must be strictly increasing");
            ok = false;
        }
        ok.then_some(v)
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::single(format!("{}: cannot read config: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}

/// Parses configuration text; relative paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
        let at = line.map(|l| format!(" (line {l})")).unwrap_or_default();
        ConfigError::single(format!("syntax{at}: {}", e.message().trim()))
    })?;
    let mut violations = Vec::new();
    unknown_keys(&table, &mut violations);
    let raw: RawConfig = match toml::Value::Table(table).try_into() {
        Ok(raw) => raw,
        Err(e) => {
            let e: toml::de::Error = e;
            violations.push(format!("type: {}", e.message().trim()));
            return Err(ConfigError { violations });
        }
    };
    match resolve(raw, base_dir) {
        Ok(cfg) if violations.is_empty() => Ok(cfg),
        Ok(_) => Err(ConfigError { violations }),
        Err(e) => {
            violations.extend(e.violations);
            Err(ConfigError { violations })
        }
    }
}

fn resolve(raw: RawConfig, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let mut c = Checker { violations: Vec::new() };
    let seed = c.require(raw.seed, "seed");

    let ds = c.require(raw.dataset, "dataset").unwrap_or_default();
    let skew = c.require(ds.skew, "dataset.skew");
    if let Some(s) = skew {
        if !(0.0..=1.0).contains(&s) {
            c.fail("dataset.skew", format!("must lie in [0,1], got {s}"));
        }
    }
    let holdout = c.require(ds.holdout, "dataset.holdout");
    if let Some(h) = holdout {
        if !(h > 0.0 && h < 1.0) {
            c.fail("dataset.holdout", format!("must lie in (0,1), got {h}"));
        }
    }
    let source = match c.require(ds.source.as_deref(), "dataset.source") {
        Some("gauss-blobs") => {
            let n = c.at_least(ds.n, 2, "dataset.n");
            let dim = c.at_least(ds.dim, 1, "dataset.dim");
            let classes = c.at_least(ds.classes, 2, "dataset.classes");
            match (n, dim, classes) {
                (Some(n), Some(dim), Some(classes)) => Some(DataSource::GaussBlobs { n, dim, classes }),
                _ => None,
            }
        }
        Some("logistic-planted") => {
            let n = c.at_least(ds.n, 2, "dataset.n");
            let dim = c.at_least(ds.dim, 1, "dataset.dim");
            n.zip(dim).map(|(n, dim)| DataSource::LogisticPlanted { n, dim })
        }
        Some("quadratic") => {
            let n = c.at_least(ds.n, 2, "dataset.n");
            let dim = c.at_least(ds.dim, 1, "dataset.dim");
            n.zip(dim).map(|(n, dim)| DataSource::Quadratic { n, dim })
        }
        Some("csv") => c
            .require(ds.path, "dataset.path")
            .map(|p| DataSource::Csv { path: base_dir.join(p) }),
        Some(other) => {
            c.fail(
                "dataset.source",
                format!("unknown source {other:?} (gauss-blobs, logistic-planted, quadratic, csv)"),
            );
            None
        }
        None => None,
    };
    if let Some(DataSource::Csv { .. }) = &source {
        for (v, name) in [
            (ds.n.is_some(), "n"),
            (ds.dim.is_some(), "dim"),
            (ds.classes.is_some(), "classes"),
        ] {
            if v {
                c.fail(&format!("dataset.{name}"), "not used by the csv source");
            }
        }
    }

    let md = c.require(raw.model, "model").unwrap_or_default();
    let model = match c.require(md.kind.as_deref(), "model.kind") {
        Some("linear-regression") => Some(ModelRecipe::LinearRegression),
        Some("logistic-binary") => Some(ModelRecipe::LogisticBinary),
        Some("softmax-linear") => c
            .at_least(md.classes, 2, "model.classes")
            .map(|classes| ModelRecipe::SoftmaxLinear { classes }),
        Some("mlp-1hidden") => {
            let hidden = c.at_least(md.hidden, 1, "model.hidden");
            let classes = c.at_least(md.classes, 2, "model.classes");
            hidden
                .zip(classes)
                .map(|(hidden, classes)| ModelRecipe::Mlp1Hidden { hidden, classes })
        }
        Some("quadratic") => {
            let b = c.require(md.b, "model.b");
            let oracle = match (b, md.diag, md.matrix) {
                (Some(b), Some(diag), None) => {
                    if diag.len() != b.len() {
                        c.fail(
                            "model.diag",
                            format!("has {} entries but model.b has {}", diag.len(), b.len()),
                        );
                        None
                    } else {
                        QuadraticOracle::diagonal(&diag, b)
                            .map_err(|e| c.fail("model.diag", e))
                            .ok()
                    }
                }
                (Some(b), None, Some(rows)) => {
                    if rows.len() != b.len() || rows.iter().any(|r| r.len() != b.len()) {
                        c.fail("model.matrix", format!("must be {0} x {0}", b.len()));
                        None
                    } else {
                        QuadraticOracle::new(rows.concat(), b)
                            .map_err(|e| c.fail("model.matrix", e))
                            .ok()
                    }
                }
                (Some(_), None, None) => {
                    c.fail("model", "quadratic needs either diag or matrix");
                    None
                }
                (Some(_), Some(_), Some(_)) => {
                    c.fail("model", "give diag or matrix, not both");
                    None
                }
                (None, _, _) => None,
            };
            oracle.map(ModelRecipe::Quadratic)
        }
        Some(other) => {
            c.fail(
                "model.kind",
                format!("unknown kind {other:?} (linear-regression, logistic-binary, softmax-linear, mlp-1hidden, quadratic)"),
            );
            None
        }
        None => None,
    };

    let fd = c.require(raw.federation, "federation").unwrap_or_default();
    let clients = c.at_least(fd.clients, 1, "federation.clients");
    let sampled = c.at_least(fd.sampled, 1, "federation.sampled");
    if let (Some(n), Some(k)) = (clients, sampled) {
        if k > n {
            c.fail("federation.sampled", format!("K={k} exceeds federation.clients N={n}"));
        }
    }
    let rounds = c.require(fd.rounds, "federation.rounds");
    let local_steps = c.at_least(fd.local_steps, 1, "federation.local_steps");
    let batch_size = c.at_least(fd.batch_size, 1, "federation.batch_size");
    let learning_rate = c.positive(fd.learning_rate, "federation.learning_rate");

    let pv = c.require(raw.privacy, "privacy").unwrap_or_default();
    let accountant = AccountantConfig {
        alpha_grid: pv.alpha_grid.unwrap_or_else(|| (2..=64).collect()),
        delta: pv.delta.unwrap_or(1e-5),
    };
    if let Err(e) = accountant.validate() {
        c.fail("privacy", e);
    }
    let budgets = c.require(pv.budgets, "privacy.budgets");
    let proportions = c.require(pv.proportions, "privacy.proportions");
    if let (Some(b), Some(p)) = (&budgets, &proportions) {
        if b.is_empty() {
            c.fail("privacy.budgets", "needs at least one budget");
        }
        if b.len() != p.len() {
            c.fail(
                "privacy.proportions",
                format!("has {} entries but privacy.budgets has {}", p.len(), b.len()),
            );
        }
        if p.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            c.fail("privacy.proportions", "must be non-negative and sum to 1");
        }
        if accountant.validate().is_ok() {
            let floor = accountant
                .alpha_grid
                .iter()
                .map(|&a| (1.0 / accountant.delta).ln() / (a as f64 - 1.0))
                .fold(f64::INFINITY, f64::min);
            for (i, eps) in b.iter().enumerate() {
                if !(*eps > floor && eps.is_finite()) {
                    c.fail(
                        &format!("privacy.budgets[{i}]"),
                        format!("{eps} is not above the reachable minimum {floor:.6} for this delta and alpha grid"),
                    );
                }
            }
        }
    }

    let pl = c.require(raw.policy, "policy").unwrap_or_default();
    let kind = match c.require(pl.kind.as_deref(), "policy.kind") {
        Some("pacdp") => Some(PolicyKind::Pacdp),
        Some("fixed") => Some(PolicyKind::Fixed),
        Some("quantile") => Some(PolicyKind::Quantile),
        Some(other) => {
            c.fail(
                "policy.kind",
                format!("unknown policy {other:?} (pacdp, fixed, quantile)"),
            );
            None
        }
        None => None,
    };
    let policy = kind.map(|kind| PolicySection {
        kind,
        clip: pl.clip,
        quantile: pl.quantile,
        initial_clip: pl.initial_clip,
        quantile_lr: pl.quantile_lr,
    });
    if let Some(p) = &policy {
        check_policy(p, &mut c);
    }

    let sc = raw.schedule.unwrap_or_default();
    let r_s = sc.r_s.unwrap_or(ScheduleParams::DEFAULT_R_S);
    let lambda_min = sc.lambda_min.unwrap_or(ScheduleParams::DEFAULT_LAMBDA_MIN);
    if let Some(t) = rounds {
        if t > 0 {
            if let Err(e) = ScheduleParams::new(t, r_s, lambda_min) {
                c.fail("schedule", e);
            }
        } else if !(0.0..1.0).contains(&r_s) || !(lambda_min > 0.0 && lambda_min <= 1.0) {
            c.fail("schedule", "r_s must lie in [0,1) and lambda_min in (0,1]");
        }
    }

    let grid = raw.grid.map(|g| {
        let eps = c.increasing_positive(g.eps, 3, "grid.eps");
        let clips = c.increasing_positive(g.clips, 2, "grid.clips");
        let seeds_per_cell = g.seeds_per_cell.unwrap_or(3);
        if seeds_per_cell == 0 {
            c.fail("grid.seeds_per_cell", "must be >= 1");
        }
        let proxy_seed = c.require(g.proxy_seed, "grid.proxy_seed");
        let g_rounds = c.at_least(g.rounds, 1, "grid.rounds");
        let g_clients = c.at_least(g.clients, 1, "grid.clients");
        let g_sampled = c.at_least(g.sampled, 1, "grid.sampled");
        if let (Some(n), Some(k)) = (g_clients, g_sampled) {
            if k > n {
                c.fail("grid.sampled", format!("K={k} exceeds grid.clients N={n}"));
            }
        }
        match (&source, g.proxy_n, &g.proxy_path) {
            (Some(DataSource::Csv { .. }), _, None) => {
                c.fail("grid.proxy_path", "required when dataset.source = \"csv\"")
            }
            (Some(DataSource::Csv { .. }), Some(_), _) => c.fail("grid.proxy_n", "not used with a csv proxy"),
            (Some(s), None, _) if !matches!(s, DataSource::Csv { .. }) => {
                c.fail("grid.proxy_n", "missing required field")
            }
            (Some(s), _, Some(_)) if !matches!(s, DataSource::Csv { .. }) => {
                c.fail("grid.proxy_path", "only used when dataset.source = \"csv\"")
            }
            _ => {}
        }
        if let (Some(n), Some(cl)) = (g.proxy_n, g_clients) {
            let train = n as f64 * (1.0 - holdout.unwrap_or(0.5));
            if (train.floor() as usize) < cl {
                c.fail(
                    "grid.proxy_n",
                    format!("{n} examples cannot cover {cl} simulated clients after the holdout split"),
                );
            }
        }
        if let Some(ModelRecipe::LinearRegression | ModelRecipe::Quadratic(_)) = &model {
            c.fail("grid", "curve fitting needs a classification model");
        }
        GridSection {
            eps: eps.unwrap_or_default(),
            clips: clips.unwrap_or_default(),
            seeds_per_cell,
            proxy_n: g.proxy_n,
            proxy_seed: proxy_seed.unwrap_or_default(),
            proxy_path: g.proxy_path.map(|p| base_dir.join(p)),
            rounds: g_rounds.unwrap_or_default(),
            clients: g_clients.unwrap_or_default(),
            sampled: g_sampled.unwrap_or_default(),
            monotone: g.monotone.unwrap_or(false),
        }
    });

    // dataset size must cover the clients after the holdout split
    if let (Some(src), Some(n_clients), Some(h)) = (&source, clients, holdout) {
        let n = match src {
            DataSource::GaussBlobs { n, .. }
            | DataSource::LogisticPlanted { n, .. }
            | DataSource::Quadratic { n, .. } => Some(*n),
            DataSource::Csv { .. } => None,
        };
        if let Some(n) = n {
            let test = ((n as f64 * h).round() as usize).clamp(1, n - 1);
            if n - test < n_clients {
                c.fail(
                    "dataset.n",
                    format!(
                        "{n} examples leave {} for training, fewer than {n_clients} clients",
                        n - test
                    ),
                );
            }
        }
    }
    if let (Some(src), Some(m)) = (&source, &model) {
        let dim = match src {
            DataSource::GaussBlobs { dim, .. }
            | DataSource::LogisticPlanted { dim, .. }
            | DataSource::Quadratic { dim, .. } => Some(*dim),
            DataSource::Csv { .. } => None,
        };
        if let Some(dim) = dim {
            if let Err(e) = m.spec(dim) {
                c.violations.extend(e.violations);
            }
            let regression_data = matches!(src, DataSource::Quadratic { .. });
            let regression_model = matches!(m, ModelRecipe::LinearRegression | ModelRecipe::Quadratic(_));
            if regression_data != regression_model {
                c.fail("model.kind", "does not match the label type of dataset.source");
            }
            if let (DataSource::GaussBlobs { classes, .. }, Some(k)) = (src, model_classes(m)) {
                if *classes > k {
                    c.fail(
                        "model.classes",
                        format!("{k} classes cannot fit {classes} dataset classes"),
                    );
                }
            }
        }
    }

    if !c.violations.is_empty() {
        return Err(ConfigError {
            violations: c.violations,
        });
    }
    Ok(RunConfig {
        seed: seed.expect("checked"),
        out_dir: raw.out_dir.map(|p| base_dir.join(p)),
        dataset: DatasetRecipe {
            source: source.expect("checked"),
            skew: skew.expect("checked"),
            holdout: holdout.expect("checked"),
        },
        model: model.expect("checked"),
        federation: FederationSection {
            clients: clients.expect("checked"),
            sampled: sampled.expect("checked"),
            rounds: rounds.expect("checked"),
            local_steps: local_steps.expect("checked"),
            batch_size: batch_size.expect("checked"),
            learning_rate: learning_rate.expect("checked"),
            renormalize: fd.renormalize.unwrap_or(true),
        },
        privacy: PrivacySection {
            accountant,
            budgets: budgets.expect("checked"),
            proportions: proportions.expect("checked"),
        },
        policy: policy.expect("checked"),
        r_s,
        lambda_min,
        grid,
    })
}

fn model_classes(m: &ModelRecipe) -> Option<usize> {
    match m {
        ModelRecipe::LogisticBinary => Some(2),
        ModelRecipe::SoftmaxLinear { classes } | ModelRecipe::Mlp1Hidden { classes, .. } => Some(*classes),
        _ => None,
    }
}

pub(crate) fn check_policy(p: &PolicySection, c: &mut impl PolicyViolations) {
    match p.kind {
        PolicyKind::Pacdp => {}
        PolicyKind::Fixed => match p.clip {
            Some(v) if v > 0.0 && v.is_finite() => {}
            Some(v) => c.violation("policy.clip", format!("must be positive, got {v}")),
            None => c.violation("policy.clip", "required for the fixed policy".into()),
        },
        PolicyKind::Quantile => {
            match p.quantile {
                Some(q) if q > 0.0 && q < 1.0 => {}
                Some(q) => c.violation("policy.quantile", format!("must lie in (0,1), got {q}")),
                None => c.violation("policy.quantile", "required for the quantile policy".into()),
            }
            match p.initial_clip {
                Some(v) if v > 0.0 && v.is_finite() => {}
                Some(v) => c.violation("policy.initial_clip", format!("must be positive, got {v}")),
                None => c.violation("policy.initial_clip", "required for the quantile policy".into()),
            }
            match p.quantile_lr {
                Some(v) if v >= 0.0 && v.is_finite() => {}
                Some(v) => c.violation("policy.quantile_lr", format!("must be >= 0, got {v}")),
                None => c.violation("policy.quantile_lr", "required for the quantile policy".into()),
            }
        }
    }
}

pub(crate) trait PolicyViolations {
    fn violation(&mut self, path: &str, msg: String);
}

impl PolicyViolations for Checker {
    fn violation(&mut self, path: &str, msg: String) {
        self.fail(path, msg);
    }
}

impl PolicyViolations for Vec<String> {
    fn violation(&mut self, path: &str, msg: String) {
        self.push(format!("{path}: {msg}"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7

[dataset]
source = "logistic-planted"
n = 400
dim = 3
skew = 0.5
holdout = 0.2

[model]
kind = "logistic-binary"

[federation]
clients = 4
sampled = 2
rounds = 10
local_steps = 1
batch_size = 16
learning_rate = 0.1

[privacy]
budgets = [1.0, 5.0]
proportions = [0.5, 0.5]

[policy]
kind = "fixed"
clip = 1.0
"#;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        parse_config_str(text, Path::new("/tmp"))
    }

    #[test]
    fn minimal_config_fills_documented_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!((cfg.r_s, cfg.lambda_min), (0.6, 0.1));
        assert_eq!(cfg.privacy.accountant.delta, 1e-5);
        assert_eq!(cfg.privacy.accountant.alpha_grid, (2..=64).collect::<Vec<u32>>());
        assert!(cfg.federation.renormalize);
        assert!(cfg.grid.is_none());
    }

    #[test]
    fn sampled_above_clients_names_both_fields() {
        let text = MINIMAL.replace("sampled = 2", "sampled = 9");
        let err = parse(&text).unwrap_err();
        assert!(err
            .violations
            .iter()
            .any(|v| v.contains("federation.sampled") && v.contains("federation.clients")));
    }

    #[test]
    fn duplicate_key_is_an_error() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nseed = 8");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn reports_every_violation() {
        let text = MINIMAL
            .replace("sampled = 2", "sampled = 9")
            .replace("learning_rate = 0.1", "learning_rate = -1.0")
            .replace("budgets = [1.0, 5.0]", "budgets = [0.1, 5.0]");
        let err = parse(&text).unwrap_err();
        assert!(err.violations.len() >= 3, "{err}");
        assert!(err.to_string().contains("privacy.budgets[0]"));
        assert!(err.to_string().contains("federation.learning_rate"));
    }

    #[test]
    fn unknown_keys_rejected_with_paths() {
        let text = format!("{MINIMAL}\n[extra]\nx = 1\n").replace("kind = \"fixed\"", "kind = \"fixed\"\ncolour = 3");
        let err = parse(&text).unwrap_err();
        assert!(err.violations.contains(&"extra: unknown key".to_string()));
        assert!(err.violations.contains(&"policy.colour: unknown key".to_string()));
        // unrelated problems are reported in the same pass
        let text = text.replace("clients = 4", "clients = 0");
        let err = parse(&text).unwrap_err();
        assert!(err.violations.contains(&"extra: unknown key".to_string()));
        assert!(err.to_string().contains("federation.clients"), "{err}");
    }

    #[test]
    fn missing_fields_are_listed() {
        let err = parse("seed = 1\n").unwrap_err();
        for section in ["dataset", "model", "federation", "privacy", "policy"] {
            assert!(
                err.violations.iter().any(|v| v.starts_with(section)),
                "{section}: {err}"
            );
        }
    }

    #[test]
    fn policy_requirements() {
        let text = MINIMAL.replace("clip = 1.0", "");
        assert!(parse(&text).unwrap_err().to_string().contains("policy.clip"));
        let text = MINIMAL.replace("kind = \"fixed\"\nclip = 1.0", "kind = \"quantile\"\nquantile = 0.5");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("policy.initial_clip") && err.to_string().contains("policy.quantile_lr"));
    }

    #[test]
    fn grid_section_parsed() {
        let text = format!(
            "{MINIMAL}\n[grid]\neps = [1.0, 2.0, 4.0]\nclips = [0.1, 1.0]\nproxy_n = 300\nproxy_seed = 5\nrounds = 5\nclients = 3\nsampled = 2\n"
        );
        let g = parse(&text).unwrap().grid.unwrap();
        assert_eq!(g.seeds_per_cell, 3);
        assert!(!g.monotone);
        let bad = text.replace("eps = [1.0, 2.0, 4.0]", "eps = [1.0, 2.0]");
        assert!(parse(&bad).unwrap_err().to_string().contains("grid.eps"));
    }

    #[test]
    fn quadratic_model_requires_matching_dimension() {
        let text = MINIMAL
            .replace("source = \"logistic-planted\"", "source = \"quadratic\"")
            .replace(
                "kind = \"logistic-binary\"",
                "kind = \"quadratic\"\ndiag = [1.0, 2.0]\nb = [0.0, 1.0]",
            );
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("does not match dataset dimension"), "{err}");
        let ok = text.replace(
            "diag = [1.0, 2.0]\nb = [0.0, 1.0]",
            "diag = [1.0, 2.0, 3.0]\nb = [0.0, 1.0, 1.0]",
        );
        assert!(matches!(parse(&ok).unwrap().model, ModelRecipe::Quadratic(_)));
    }

    #[test]
    fn schedule_must_leave_a_decay_round() {
        let text = format!("{MINIMAL}\n[schedule]\nr_s = 1.0\n");
        assert!(parse(&text).unwrap_err().to_string().contains("schedule"));
    }
}
