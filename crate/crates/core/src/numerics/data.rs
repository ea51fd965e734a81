//! Examples, datasets, synthetic generators and the tabular CSV loader.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ParamVector;
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    Class(usize),
    Value(f64),
}

impl Label {
    /// Class index used for partitioning; regression targets share class 0.
    pub fn class_or_zero(&self) -> usize {
        match *self {
            Label::Class(c) => c,
            Label::Value(_) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: Label,
}

impl Example {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Example { features, label }
    }
}

/// A non-empty collection of examples sharing one feature dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    examples: Vec<Example>,
    dim: usize,
}

impl LocalDataset {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::Domain("dataset must contain at least one example".into()))?;
        let dim = first.features.len();
        for (i, ex) in examples.iter().enumerate() {
            if ex.features.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: ex.features.len(),
                    context: "example feature length",
                });
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("example {i} has a non-finite feature")));
            }
            if let Label::Value(v) = ex.label {
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("example {i} has a non-finite target")));
                }
            }
        }
        Ok(LocalDataset { examples, dim })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    pub fn into_examples(self) -> Vec<Example> {
        self.examples
    }

    /// One more than the largest class label, or 0 for regression data.
    pub fn num_classes(&self) -> usize {
        self.examples
            .iter()
            .filter_map(|e| match e.label {
                Label::Class(c) => Some(c + 1),
                Label::Value(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Shuffles deterministically and splits off `holdout` of the examples
    /// (at least one on each side).
    pub fn split_holdout(&self, holdout: f64, seed: u64) -> Result<(LocalDataset, LocalDataset)> {
        if !(holdout > 0.0 && holdout < 1.0) {
            return Err(Error::Domain(format!(
                "holdout fraction must lie in (0,1), got {holdout}"
            )));
        }
        if self.len() < 2 {
            return Err(Error::Domain("cannot split a single-example dataset".into()));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut stream(seed, Domain::Split, &[self.len() as u64]));
        let n_test = ((self.len() as f64 * holdout).round() as usize).clamp(1, self.len() - 1);
        let pick = |ids: &[usize]| LocalDataset::new(ids.iter().map(|&i| self.examples[i].clone()).collect());
        let test = pick(&idx[..n_test])?;
        let train = pick(&idx[n_test..])?;
        Ok((train, test))
    }
}

/// Synthetic proxy tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticTask {
    /// Isotropic unit-variance blobs around random centres, balanced classes.
    GaussBlobs { classes: usize },
    /// Binary labels from a planted linear model with 5% label flips.
    LogisticPlanted,
    /// Exactly centred per-example shifts for the quadratic oracle model.
    Quadratic,
}

const PLANTED_NORM: f64 = 4.0;
const PLANTED_BIAS: f64 = 0.5;
const LABEL_FLIP: f64 = 0.05;

pub fn gen_synthetic(task: SyntheticTask, n: usize, p: usize, seed: u64) -> Result<LocalDataset> {
    if n == 0 {
        return Err(Error::Domain("synthetic dataset needs n >= 1".into()));
    }
    if p == 0 {
        return Err(Error::Domain("synthetic dataset needs p >= 1".into()));
    }
    match task {
        SyntheticTask::GaussBlobs { classes } => gauss_blobs(n, p, classes, seed),
        SyntheticTask::LogisticPlanted => gen_logistic_planted(n, p, seed).map(|(d, _)| d),
        SyntheticTask::Quadratic => quadratic_shifts(n, p, seed),
    }
}

fn normal_vec<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    (0..p).map(|_| StandardNormal.sample(rng)).collect()
}

fn gauss_blobs(n: usize, p: usize, classes: usize, seed: u64) -> Result<LocalDataset> {
    if classes < 2 {
        return Err(Error::Domain("gauss-blobs needs at least 2 classes".into()));
    }
    let mut rng = stream(seed, Domain::Synthetic, &[0, n as u64, p as u64]);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| normal_vec(&mut rng, p).into_iter().map(|v| 3.0 * v).collect())
        .collect();
    let examples = (0..n)
        .map(|i| {
            let c = i % classes;
            let features = centres[c]
                .iter()
                .map(|m| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    m + n
                })
                .collect();
            Example::new(features, Label::Class(c))
        })
        .collect();
    LocalDataset::new(examples)
}

/// Logistic-planted data together with the planted parameters, laid out as a
/// logistic-binary parameter vector `[w; b]`.
pub fn gen_logistic_planted(n: usize, p: usize, seed: u64) -> Result<(LocalDataset, ParamVector)> {
    if n == 0 || p == 0 {
        return Err(Error::Domain("logistic-planted needs n >= 1 and p >= 1".into()));
    }
    let mut rng = stream(seed, Domain::Synthetic, &[1, n as u64, p as u64]);
    let raw = normal_vec(&mut rng, p);
    let norm = super::l2_norm(&raw).max(f64::MIN_POSITIVE);
    let mut planted: Vec<f64> = raw.iter().map(|v| PLANTED_NORM * v / norm).collect();
    planted.push(PLANTED_BIAS);
    let examples = (0..n)
        .map(|_| {
            let x = normal_vec(&mut rng, p);
            let margin: f64 = x.iter().zip(&planted).map(|(a, b)| a * b).sum::<f64>() + PLANTED_BIAS;
            let mut y = usize::from(margin > 0.0);
            if rng.random::<f64>() < LABEL_FLIP {
                y = 1 - y;
            }
            Example::new(x, Label::Class(y))
        })
        .collect();
    Ok((LocalDataset::new(examples)?, ParamVector::new(planted)?))
}

fn quadratic_shifts(n: usize, p: usize, seed: u64) -> Result<LocalDataset> {
    let mut rng = stream(seed, Domain::Synthetic, &[2, n as u64, p as u64]);
    let mut rows: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(&mut rng, p)).collect();
    let mean: Vec<f64> = (0..p)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    for r in &mut rows {
        for (v, m) in r.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    LocalDataset::new(rows.into_iter().map(|f| Example::new(f, Label::Value(0.0))).collect())
}

/// Reads a header row followed by numeric feature columns and a final
/// integer class column.
pub fn read_csv<R: Read>(reader: R) -> Result<LocalDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let width = rdr.headers()?.len();
    if width < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "need at least one feature column and a label column".into(),
        });
    }
    let mut examples = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: {s:?}"),
            })
        };
        let features = record.iter().take(width - 1).map(parse).collect::<Result<Vec<f64>>>()?;
        let raw = record.get(width - 1).unwrap_or("");
        let label = raw.trim().parse::<usize>().map_err(|_| Error::Parse {
            line,
            message: format!("label must be a non-negative integer, got {raw:?}"),
        })?;
        examples.push(Example::new(features, Label::Class(label)));
    }
    LocalDataset::new(examples)
}

pub fn load_csv(path: &Path) -> Result<LocalDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_have_requested_shape() {
        let d = gen_synthetic(SyntheticTask::GaussBlobs { classes: 2 }, 100, 2, 3).unwrap();
        assert_eq!(d.len(), 100);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.num_classes(), 2);
    }

    #[test]
    fn same_seed_same_dataset() {
        for task in [
            SyntheticTask::GaussBlobs { classes: 3 },
            SyntheticTask::LogisticPlanted,
            SyntheticTask::Quadratic,
        ] {
            let a = gen_synthetic(task, 50, 4, 11).unwrap();
            let b = gen_synthetic(task, 50, 4, 11).unwrap();
            let bits = |d: &LocalDataset| -> Vec<u64> {
                d.examples()
                    .iter()
                    .flat_map(|e| e.features.iter().map(|v| v.to_bits()))
                    .collect()
            };
            assert_eq!(bits(&a), bits(&b));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_examples_is_domain_error() {
        assert!(matches!(
            gen_synthetic(SyntheticTask::LogisticPlanted, 0, 3, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(LocalDataset::new(vec![]), Err(Error::Domain(_))));
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let r = LocalDataset::new(vec![
            Example::new(vec![1.0], Label::Class(0)),
            Example::new(vec![1.0, 2.0], Label::Class(1)),
        ]);
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn quadratic_shifts_are_centred() {
        let d = gen_synthetic(SyntheticTask::Quadratic, 200, 3, 5).unwrap();
        for j in 0..3 {
            let m: f64 = d.examples().iter().map(|e| e.features[j]).sum::<f64>() / 200.0;
            assert!(m.abs() < 1e-14);
        }
    }

    #[test]
    fn csv_loader_reads_features_and_label() {
        let text = "age,chol,target\n63,233,1\n41,204,0\n";
        let d = read_csv(text.as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.get(0).features, vec![63.0, 233.0]);
        assert_eq!(d.get(1).label, Label::Class(0));
    }

    #[test]
    fn csv_loader_reports_bad_cells() {
        let text = "a,b,target\n1,2,0\n1,x,1\n";
        match read_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_csv("a,target\n1,0.5\n".as_bytes()).is_err());
    }

    #[test]
    fn holdout_split_partitions_examples() {
        let d = gen_synthetic(SyntheticTask::LogisticPlanted, 101, 2, 9).unwrap();
        let (train, test) = d.split_holdout(0.2, 4).unwrap();
        assert_eq!(train.len() + test.len(), 101);
        assert_eq!(test.len(), 20);
    }
}
