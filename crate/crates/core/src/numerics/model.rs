//! Model families with hand-derived per-example losses and gradients.
//!
//! Parameter layouts (all flat, row-major):
//! - linear regression / logistic: `[w_1..w_p, bias]`
//! - softmax-linear: `W (k x p)` then `b (k)`
//! - one-hidden-layer MLP (tanh): `W1 (h x p)`, `b1 (h)`, `W2 (k x h)`, `b2 (k)`
//! - quadratic oracle: `w (d)`
//!
//! Classification losses use natural-log cross-entropy. Predictions break
//! exact ties toward the lowest class index.

use rand_distr::{Distribution, Uniform};

use super::{check_dim, Example, Label, LocalDataset, ParamVector};
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

const INIT_SCALE: f64 = 0.1;

/// Strongly convex test objective `f(w) = ½ wᵀAw − bᵀw`.
///
/// Each example contributes a shift: its per-example loss is
/// `½ wᵀAw − (b + x)ᵀw` where `x` is the example's feature vector. Datasets
/// from `SyntheticTask::Quadratic` are exactly centred, so their mean loss is
/// the oracle objective itself.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticOracle {
    a: Vec<f64>,
    b: Vec<f64>,
    chol: Vec<f64>,
}

impl QuadraticOracle {
    /// `a` is the row-major `d x d` matrix; it must be symmetric positive definite.
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let d = b.len();
        if d == 0 {
            return Err(Error::Config("quadratic oracle needs d >= 1".into()));
        }
        if a.len() != d * d {
            return Err(Error::Config(format!(
                "quadratic oracle matrix has {} entries, expected {}",
                a.len(),
                d * d
            )));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Config("quadratic oracle entries must be finite".into()));
        }
        for i in 0..d {
            for j in 0..i {
                let (x, y) = (a[i * d + j], a[j * d + i]);
                if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                    return Err(Error::Config("quadratic oracle matrix must be symmetric".into()));
                }
            }
        }
        let chol =
            cholesky(&a, d).ok_or_else(|| Error::Config("quadratic oracle matrix must be positive definite".into()))?;
        Ok(QuadraticOracle { a, b, chol })
    }

    pub fn identity(b: Vec<f64>) -> Result<Self> {
        let d = b.len();
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = 1.0;
        }
        Self::new(a, b)
    }

    pub fn diagonal(diag: &[f64], b: Vec<f64>) -> Result<Self> {
        let d = diag.len();
        let mut a = vec![0.0; d * d];
        for (i, v) in diag.iter().enumerate() {
            a[i * d + i] = *v;
        }
        Self::new(a, b)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    pub fn linear(&self) -> &[f64] {
        &self.b
    }

    fn a_times(&self, w: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|j| self.a[i * d + j] * w[j]).sum()).collect()
    }

    /// `A⁻¹ b` via the stored Cholesky factor.
    pub fn minimizer(&self) -> Vec<f64> {
        let d = self.dim();
        let l = &self.chol;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let s: f64 = (0..i).map(|k| l[i * d + k] * y[k]).sum();
            y[i] = (self.b[i] - s) / l[i * d + i];
        }
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|k| l[k * d + i] * x[k]).sum();
            x[i] = (y[i] - s) / l[i * d + i];
        }
        x
    }

    /// `f(w)` without any per-example shift.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let aw = self.a_times(w);
        0.5 * dot(w, &aw) - dot(&self.b, w)
    }

    /// `-½ bᵀA⁻¹b`, the minimum of [`QuadraticOracle::objective`].
    pub fn min_value(&self) -> f64 {
        -0.5 * dot(&self.b, &self.minimizer())
    }
}

fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let v = a[i * d + i] - s;
                if v <= 0.0 || !v.is_finite() {
                    return None;
                }
                l[i * d + i] = v.sqrt();
            } else {
                l[i * d + j] = (a[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    Some(l)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    LinearRegression {
        input_dim: usize,
    },
    LogisticBinary {
        input_dim: usize,
    },
    SoftmaxLinear {
        input_dim: usize,
        classes: usize,
    },
    Mlp1Hidden {
        input_dim: usize,
        hidden: usize,
        classes: usize,
    },
    Quadratic(QuadraticOracle),
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match *self {
            ModelSpec::LinearRegression { input_dim } | ModelSpec::LogisticBinary { input_dim } => {
                if input_dim == 0 {
                    return bad("input_dim must be >= 1");
                }
            }
            ModelSpec::SoftmaxLinear { input_dim, classes } => {
                if input_dim == 0 || classes < 2 {
                    return bad("softmax-linear needs input_dim >= 1 and classes >= 2");
                }
            }
            ModelSpec::Mlp1Hidden {
                input_dim,
                hidden,
                classes,
            } => {
                if input_dim == 0 || hidden == 0 || classes < 2 {
                    return bad("mlp-1hidden needs input_dim >= 1, hidden >= 1 and classes >= 2");
                }
            }
            ModelSpec::Quadratic(_) => {}
        }
        Ok(())
    }

    /// Number of parameters `d`.
    pub fn param_count(&self) -> usize {
        match self {
            ModelSpec::LinearRegression { input_dim } | ModelSpec::LogisticBinary { input_dim } => input_dim + 1,
            ModelSpec::SoftmaxLinear { input_dim, classes } => classes * (input_dim + 1),
            ModelSpec::Mlp1Hidden {
                input_dim,
                hidden,
                classes,
            } => input_dim * hidden + hidden + hidden * classes + classes,
            ModelSpec::Quadratic(q) => q.dim(),
        }
    }

    /// Expected example feature length.
    pub fn input_dim(&self) -> usize {
        match self {
            ModelSpec::LinearRegression { input_dim }
            | ModelSpec::LogisticBinary { input_dim }
            | ModelSpec::SoftmaxLinear { input_dim, .. }
            | ModelSpec::Mlp1Hidden { input_dim, .. } => *input_dim,
            ModelSpec::Quadratic(q) => q.dim(),
        }
    }

    /// Number of classes for classifiers, `None` for regression-type models.
    pub fn classes(&self) -> Option<usize> {
        match self {
            ModelSpec::LogisticBinary { .. } => Some(2),
            ModelSpec::SoftmaxLinear { classes, .. } | ModelSpec::Mlp1Hidden { classes, .. } => Some(*classes),
            ModelSpec::LinearRegression { .. } | ModelSpec::Quadratic(_) => None,
        }
    }

    pub fn is_classifier(&self) -> bool {
        self.classes().is_some()
    }
}

pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let d = spec.param_count();
    let mut rng = stream(seed, Domain::ModelInit, &[d as u64]);
    let dist = Uniform::new_inclusive(-INIT_SCALE, INIT_SCALE).map_err(|e| Error::Config(e.to_string()))?;
    Ok(ParamVector::from_finite(
        (0..d).map(|_| dist.sample(&mut rng)).collect(),
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn class_label(x: &Example, classes: usize) -> Result<usize> {
    match x.label {
        Label::Class(c) if c < classes => Ok(c),
        Label::Class(c) => Err(Error::Domain(format!(
            "class label {c} out of range for {classes} classes"
        ))),
        Label::Value(_) => Err(Error::Domain("classification model given a real-valued target".into())),
    }
}

fn check_inputs(spec: &ModelSpec, params: &[f64], x: &Example) -> Result<()> {
    check_dim(spec.param_count(), params.len(), "parameter vector")?;
    check_dim(spec.input_dim(), x.features.len(), "example features")
}

/// Logits of a softmax-linear model.
fn linear_logits(params: &[f64], x: &[f64], p: usize, k: usize) -> Vec<f64> {
    (0..k)
        .map(|c| dot(&params[c * p..(c + 1) * p], x) + params[k * p + c])
        .collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

struct MlpForward {
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn mlp_forward(params: &[f64], x: &[f64], p: usize, h: usize, k: usize) -> MlpForward {
    let (w1, rest) = params.split_at(h * p);
    let (b1, rest) = rest.split_at(h);
    let (w2, b2) = rest.split_at(k * h);
    let hidden: Vec<f64> = (0..h)
        .map(|j| (dot(&w1[j * p..(j + 1) * p], x) + b1[j]).tanh())
        .collect();
    let logits = (0..k).map(|c| dot(&w2[c * h..(c + 1) * h], &hidden) + b2[c]).collect();
    MlpForward { hidden, logits }
}

pub fn per_example_loss(spec: &ModelSpec, params: &ParamVector, x: &Example) -> Result<f64> {
    check_inputs(spec, params, x)?;
    let f = &x.features;
    let loss = match spec {
        ModelSpec::LinearRegression { input_dim } => {
            let y = match x.label {
                Label::Value(v) => v,
                Label::Class(c) => c as f64,
            };
            let r = dot(&params[..*input_dim], f) + params[*input_dim] - y;
            0.5 * r * r
        }
        ModelSpec::LogisticBinary { input_dim } => {
            let y = class_label(x, 2)? as f64;
            let z = dot(&params[..*input_dim], f) + params[*input_dim];
            softplus(z) - y * z
        }
        ModelSpec::SoftmaxLinear { input_dim, classes } => {
            let y = class_label(x, *classes)?;
            -log_softmax(&linear_logits(params, f, *input_dim, *classes))[y]
        }
        ModelSpec::Mlp1Hidden {
            input_dim,
            hidden,
            classes,
        } => {
            let y = class_label(x, *classes)?;
            let fwd = mlp_forward(params, f, *input_dim, *hidden, *classes);
            -log_softmax(&fwd.logits)[y]
        }
        ModelSpec::Quadratic(q) => q.objective(params) - dot(f, params),
    };
    Ok(loss)
}

pub fn per_example_gradient(spec: &ModelSpec, params: &ParamVector, x: &Example) -> Result<ParamVector> {
    check_inputs(spec, params, x)?;
    let f = &x.features;
    let grad = match spec {
        ModelSpec::LinearRegression { input_dim } => {
            let y = match x.label {
                Label::Value(v) => v,
                Label::Class(c) => c as f64,
            };
            let r = dot(&params[..*input_dim], f) + params[*input_dim] - y;
            f.iter().map(|v| r * v).chain(std::iter::once(r)).collect()
        }
        ModelSpec::LogisticBinary { input_dim } => {
            let y = class_label(x, 2)? as f64;
            let s = sigmoid(dot(&params[..*input_dim], f) + params[*input_dim]) - y;
            f.iter().map(|v| s * v).chain(std::iter::once(s)).collect()
        }
        ModelSpec::SoftmaxLinear { input_dim, classes } => {
            let (p, k) = (*input_dim, *classes);
            let y = class_label(x, k)?;
            let probs: Vec<f64> = log_softmax(&linear_logits(params, f, p, k))
                .into_iter()
                .map(f64::exp)
                .collect();
            let mut g = vec![0.0; k * (p + 1)];
            for c in 0..k {
                let delta = probs[c] - if c == y { 1.0 } else { 0.0 };
                for j in 0..p {
                    g[c * p + j] = delta * f[j];
                }
                g[k * p + c] = delta;
            }
            g
        }
        ModelSpec::Mlp1Hidden {
            input_dim,
            hidden,
            classes,
        } => {
            let (p, h, k) = (*input_dim, *hidden, *classes);
            let y = class_label(x, k)?;
            let fwd = mlp_forward(params, f, p, h, k);
            let dlogits: Vec<f64> = log_softmax(&fwd.logits)
                .into_iter()
                .enumerate()
                .map(|(c, lp)| lp.exp() - if c == y { 1.0 } else { 0.0 })
                .collect();
            let w2 = &params[h * p + h..h * p + h + k * h];
            let mut g = vec![0.0; spec.param_count()];
            let (gw1, rest) = g.split_at_mut(h * p);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(k * h);
            for c in 0..k {
                for j in 0..h {
                    gw2[c * h + j] = dlogits[c] * fwd.hidden[j];
                }
                gb2[c] = dlogits[c];
            }
            for j in 0..h {
                let back: f64 = (0..k).map(|c| w2[c * h + j] * dlogits[c]).sum();
                let da = back * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
                for i in 0..p {
                    gw1[j * p + i] = da * f[i];
                }
                gb1[j] = da;
            }
            g
        }
        ModelSpec::Quadratic(q) => q
            .a_times(params)
            .into_iter()
            .zip(q.b.iter().zip(f))
            .map(|(aw, (b, s))| aw - b - s)
            .collect(),
    };
    ParamVector::new(grad)
}

/// Mean per-example loss.
pub fn dataset_loss(spec: &ModelSpec, params: &ParamVector, data: &LocalDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Domain("loss of an empty dataset".into()));
    }
    let mut total = 0.0;
    for x in data.examples() {
        total += per_example_loss(spec, params, x)?;
    }
    Ok(total / data.len() as f64)
}

fn predict(spec: &ModelSpec, params: &[f64], x: &[f64]) -> usize {
    let argmax = |v: &[f64]| {
        let mut best = 0;
        for (i, &s) in v.iter().enumerate() {
            if s > v[best] {
                best = i;
            }
        }
        best
    };
    match spec {
        // sigma(z) > 0.5 strictly; z == 0 ties to class 0
        ModelSpec::LogisticBinary { input_dim } => {
            usize::from(dot(&params[..*input_dim], x) + params[*input_dim] > 0.0)
        }
        ModelSpec::SoftmaxLinear { input_dim, classes } => argmax(&linear_logits(params, x, *input_dim, *classes)),
        ModelSpec::Mlp1Hidden {
            input_dim,
            hidden,
            classes,
        } => argmax(&mlp_forward(params, x, *input_dim, *hidden, *classes).logits),
        ModelSpec::LinearRegression { .. } | ModelSpec::Quadratic(_) => 0,
    }
}

/// Fraction of examples classified correctly.
pub fn accuracy(spec: &ModelSpec, params: &ParamVector, data: &LocalDataset) -> Result<f64> {
    let classes = spec
        .classes()
        .ok_or_else(|| Error::UnsupportedMetric("accuracy is undefined for regression-type models".into()))?;
    check_dim(spec.param_count(), params.len(), "parameter vector")?;
    check_dim(spec.input_dim(), data.dim(), "example features")?;
    let mut correct = 0usize;
    for x in data.examples() {
        if predict(spec, params, &x.features) == class_label(x, classes)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gen_synthetic, SyntheticTask};
    use rand::Rng;

    fn ex(features: Vec<f64>, label: Label) -> Example {
        Example::new(features, label)
    }

    #[test]
    fn init_is_deterministic_and_sized() {
        let spec = ModelSpec::LogisticBinary { input_dim: 2 };
        assert_eq!(init_model(&spec, 7).unwrap(), init_model(&spec, 7).unwrap());
        assert_ne!(init_model(&spec, 7).unwrap(), init_model(&spec, 8).unwrap());

        let q = ModelSpec::Quadratic(QuadraticOracle::identity(vec![1.0, 2.0, 3.0]).unwrap());
        let w = init_model(&q, 0).unwrap();
        assert_eq!(w.len(), 3);
        assert!(w.iter().all(|v| v.is_finite() && v.abs() <= INIT_SCALE));

        let mlp = ModelSpec::Mlp1Hidden {
            input_dim: 4,
            hidden: 3,
            classes: 2,
        };
        // 4*3 + 3 + 3*2 + 2
        assert_eq!(init_model(&mlp, 1).unwrap().len(), 23);
    }

    #[test]
    fn invalid_spec_is_config_error() {
        let spec = ModelSpec::SoftmaxLinear {
            input_dim: 3,
            classes: 1,
        };
        assert!(matches!(init_model(&spec, 0), Err(Error::Config(_))));
        assert!(QuadraticOracle::new(vec![1.0, 2.0, 0.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(QuadraticOracle::diagonal(&[1.0, -1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let spec = ModelSpec::LogisticBinary { input_dim: 2 };
        let w = ParamVector::zeros(3);
        let g0 = per_example_gradient(&spec, &w, &ex(vec![2.0, -1.0], Label::Class(0))).unwrap();
        assert_eq!(g0.as_slice(), &[1.0, -0.5, 0.5]);
        let g1 = per_example_gradient(&spec, &w, &ex(vec![2.0, -1.0], Label::Class(1))).unwrap();
        assert_eq!(g1.as_slice(), &[-1.0, 0.5, -0.5]);
    }

    #[test]
    fn quadratic_gradient_vanishes_at_minimizer() {
        let b = vec![0.3, -1.2, 2.0];
        let spec = ModelSpec::Quadratic(QuadraticOracle::identity(b.clone()).unwrap());
        let w = ParamVector::new(b).unwrap();
        let g = per_example_gradient(&spec, &w, &ex(vec![0.0; 3], Label::Value(0.0))).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let spec = ModelSpec::LogisticBinary { input_dim: 2 };
        let w = ParamVector::zeros(3);
        let r = per_example_gradient(&spec, &w, &ex(vec![1.0], Label::Class(0)));
        assert!(matches!(r, Err(Error::Shape { .. })));
        let r = per_example_gradient(&spec, &ParamVector::zeros(2), &ex(vec![1.0, 2.0], Label::Class(0)));
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn logistic_loss_at_zero_is_ln2() {
        let spec = ModelSpec::LogisticBinary { input_dim: 5 };
        let data = gen_synthetic(SyntheticTask::LogisticPlanted, 40, 5, 2).unwrap();
        let l = dataset_loss(&spec, &ParamVector::zeros(6), &data).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn single_example_loss_is_the_example_loss() {
        let spec = ModelSpec::SoftmaxLinear {
            input_dim: 2,
            classes: 3,
        };
        let w = init_model(&spec, 3).unwrap();
        let x = ex(vec![0.4, -0.7], Label::Class(2));
        let data = LocalDataset::new(vec![x.clone()]).unwrap();
        assert_eq!(
            dataset_loss(&spec, &w, &data).unwrap(),
            per_example_loss(&spec, &w, &x).unwrap()
        );
    }

    /// Plain Gaussian elimination with partial pivoting, independent of the
    /// Cholesky path used by `QuadraticOracle::minimizer`.
    fn gauss_solve(a: &[f64], b: &[f64]) -> Vec<f64> {
        let d = b.len();
        let mut m: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let mut row = a[i * d..(i + 1) * d].to_vec();
                row.push(b[i]);
                row
            })
            .collect();
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
                .unwrap();
            m.swap(col, piv);
            let (top, below) = m.split_at_mut(col + 1);
            let pivot = &top[col];
            for row in below {
                let f = row[col] / pivot[col];
                for (v, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                    *v -= f * p;
                }
            }
        }
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|k| m[i][k] * x[k]).sum();
            x[i] = (m[i][d] - s) / m[i][i];
        }
        x
    }

    #[test]
    fn quadratic_minimum_matches_closed_form() {
        let a = vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let b = vec![1.0, -2.0, 0.5];
        let q = QuadraticOracle::new(a.clone(), b.clone()).unwrap();
        let xstar = gauss_solve(&a, &b);
        for (u, v) in q.minimizer().iter().zip(&xstar) {
            assert!((u - v).abs() < 1e-12);
        }
        let spec = ModelSpec::Quadratic(q.clone());
        let data = gen_synthetic(SyntheticTask::Quadratic, 64, 3, 8).unwrap();
        let w = ParamVector::new(xstar.clone()).unwrap();
        let loss = dataset_loss(&spec, &w, &data).unwrap();
        let closed = -0.5 * b.iter().zip(&xstar).map(|(x, y)| x * y).sum::<f64>();
        assert!((loss - closed).abs() < 1e-12, "{loss} vs {closed}");
        assert!((q.min_value() - closed).abs() < 1e-12);
    }

    #[test]
    fn accuracy_counts_and_ties() {
        let spec = ModelSpec::LogisticBinary { input_dim: 1 };
        let data = LocalDataset::new(vec![
            ex(vec![1.0], Label::Class(1)),
            ex(vec![2.0], Label::Class(1)),
            ex(vec![-1.0], Label::Class(0)),
            ex(vec![-2.0], Label::Class(1)),
        ])
        .unwrap();
        let w = ParamVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(accuracy(&spec, &w, &data).unwrap(), 0.75);

        // zero params: every prediction ties and resolves to class 0
        let balanced = LocalDataset::new(vec![
            ex(vec![1.0], Label::Class(0)),
            ex(vec![1.0], Label::Class(1)),
            ex(vec![-1.0], Label::Class(0)),
            ex(vec![-1.0], Label::Class(1)),
        ])
        .unwrap();
        assert_eq!(accuracy(&spec, &ParamVector::zeros(2), &balanced).unwrap(), 0.5);
        let soft = ModelSpec::SoftmaxLinear {
            input_dim: 1,
            classes: 2,
        };
        assert_eq!(accuracy(&soft, &ParamVector::zeros(4), &balanced).unwrap(), 0.5);
    }

    #[test]
    fn separable_data_fitted_params_are_perfect() {
        let spec = ModelSpec::LogisticBinary { input_dim: 2 };
        let data = gen_synthetic(SyntheticTask::GaussBlobs { classes: 2 }, 50, 2, 1).unwrap();
        // separating direction through the two class means
        let mean = |c: usize| -> Vec<f64> {
            let pts: Vec<&Example> = data.examples().iter().filter(|e| e.label == Label::Class(c)).collect();
            (0..2)
                .map(|j| pts.iter().map(|e| e.features[j]).sum::<f64>() / pts.len() as f64)
                .collect()
        };
        let (m0, m1) = (mean(0), mean(1));
        let w: Vec<f64> = (0..2).map(|j| m1[j] - m0[j]).collect();
        let mid: Vec<f64> = (0..2).map(|j| 0.5 * (m0[j] + m1[j])).collect();
        let b = -dot(&w, &mid);
        let params = ParamVector::new(vec![w[0], w[1], b]).unwrap();
        let acc = accuracy(&spec, &params, &data).unwrap();
        // blobs seeded this way are well separated
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn regression_accuracy_unsupported() {
        let spec = ModelSpec::LinearRegression { input_dim: 1 };
        let data = LocalDataset::new(vec![ex(vec![1.0], Label::Value(2.0))]).unwrap();
        assert!(matches!(
            accuracy(&spec, &ParamVector::zeros(2), &data),
            Err(Error::UnsupportedMetric(_))
        ));
    }

    fn central_difference(spec: &ModelSpec, w: &ParamVector, x: &Example) -> Vec<f64> {
        let h = 1e-6;
        (0..w.len())
            .map(|i| {
                let mut plus = w.to_vec();
                let mut minus = w.to_vec();
                plus[i] += h;
                minus[i] -= h;
                let lp = per_example_loss(spec, &ParamVector::new(plus).unwrap(), x).unwrap();
                let lm = per_example_loss(spec, &ParamVector::new(minus).unwrap(), x).unwrap();
                (lp - lm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let specs = vec![
            ModelSpec::LinearRegression { input_dim: 3 },
            ModelSpec::LogisticBinary { input_dim: 3 },
            ModelSpec::SoftmaxLinear {
                input_dim: 3,
                classes: 4,
            },
            ModelSpec::Mlp1Hidden {
                input_dim: 3,
                hidden: 5,
                classes: 3,
            },
            ModelSpec::Quadratic(
                QuadraticOracle::new(
                    vec![2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0],
                    vec![0.5, -1.0, 0.25],
                )
                .unwrap(),
            ),
        ];
        let mut rng = stream(99, Domain::Aux, &[]);
        for spec in &specs {
            for trial in 0..100 {
                let w =
                    ParamVector::new((0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
                let features: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let label = match spec.classes() {
                    Some(k) => Label::Class(rng.random_range(0..k)),
                    None => Label::Value(rng.random_range(-1.0..1.0)),
                };
                let x = ex(features, label);
                let g = per_example_gradient(spec, &w, &x).unwrap();
                let fd = central_difference(spec, &w, &x);
                let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let scale = g.norm().max(1.0);
                assert!(
                    diff / scale < 1e-5,
                    "{spec:?} trial {trial}: analytic {g:?} vs fd {fd:?}"
                );
            }
        }
    }
}
