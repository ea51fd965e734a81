//! Record-level local DP mechanism: per-example clipping, minibatch
//! averaging and Gaussian perturbation.
//!
//! # Sensitivity convention
//!
//! Noise is calibrated to `Δ₂ = C / B`, the change of the clipped minibatch
//! mean when one record's contribution is added or removed. Under strict
//! replace-one adjacency the mean can move by up to `2C / B`; a caller that
//! needs that guarantee must double `z`. The accountant reports ε for the
//! `C / B` calibration.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{l2_norm, ParamVector};

/// Per-example ℓ2 clipping threshold, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ClipBound(f64);

impl ClipBound {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c.is_finite() {
            Ok(ClipBound(c))
        } else {
            Err(Error::Domain(format!(
                "clip bound must be positive and finite, got {c}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Noise multiplier, minibatch size and clip bound of one noised step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub z: f64,
    pub batch: usize,
    pub clip: ClipBound,
}

impl NoiseSpec {
    pub fn new(z: f64, batch: usize, clip: ClipBound) -> Result<Self> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Domain(format!("noise multiplier must be positive, got {z}")));
        }
        if batch == 0 {
            return Err(Error::Domain("batch size must be >= 1".into()));
        }
        Ok(NoiseSpec { z, batch, clip })
    }

    /// Per-coordinate standard deviation `z · C / B`.
    pub fn std_dev(&self) -> f64 {
        self.z * sensitivity(self)
    }
}

pub fn sensitivity(spec: &NoiseSpec) -> f64 {
    spec.clip.value() / spec.batch as f64
}

/// Scales `g` by `min(1, C / ‖g‖)`. The zero vector is returned unchanged.
pub fn clip_per_example(g: &[f64], clip: ClipBound) -> Result<ParamVector> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("cannot clip a non-finite gradient".into()));
    }
    let norm = l2_norm(g);
    let c = clip.value();
    if norm <= c {
        return Ok(ParamVector::from_finite(g.to_vec()));
    }
    let factor = c / norm;
    let mut out: Vec<f64> = g.iter().map(|v| v * factor).collect();
    // rounding can leave the result a few ulps above C
    let mut over = l2_norm(&out);
    while over > c {
        let fix = (c / over).min(1.0 - 2.0 * f64::EPSILON);
        out.iter_mut().for_each(|v| *v *= fix);
        over = l2_norm(&out);
    }
    Ok(ParamVector::from_finite(out))
}

/// Mean of the clipped per-example gradients.
pub fn average_clipped(grads: &[ParamVector], clip: ClipBound) -> Result<ParamVector> {
    let first = grads
        .first()
        .ok_or_else(|| Error::Domain("cannot average an empty minibatch".into()))?;
    let dim = first.len();
    let mut acc = vec![0.0; dim];
    for g in grads {
        if g.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                actual: g.len(),
                context: "minibatch gradient",
            });
        }
        let clipped = clip_per_example(g, clip)?;
        for (a, v) in acc.iter_mut().zip(clipped.iter()) {
            *a += v;
        }
    }
    let inv = 1.0 / grads.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(ParamVector::from_finite(acc))
}

/// Adds i.i.d. `N(0, (zC/B)²)` noise to every coordinate.
pub fn gaussian_perturb<R: Rng + ?Sized>(gbar: &ParamVector, spec: &NoiseSpec, rng: &mut R) -> Result<ParamVector> {
    let std = spec.std_dev();
    let noised = gbar
        .iter()
        .map(|v| {
            let n: f64 = StandardNormal.sample(rng);
            v + std * n
        })
        .collect();
    ParamVector::new(noised)
}

fn check_delta(delta: f64) -> Result<()> {
    // ln(1.25/δ) bound is only claimed for δ < 1/e
    if delta > 0.0 && delta < std::f64::consts::E.recip() {
        Ok(())
    } else {
        Err(Error::Domain(format!("delta must lie in (0, 1/e), got {delta}")))
    }
}

/// Noise multiplier `√(2 ln(1.25/δ)) / ε` of the classical Gaussian mechanism.
pub fn z_from_epsilon(epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    check_delta(delta)?;
    Ok((2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

/// Per-invocation ε `√(2 ln(1.25/δ)) / z`.
pub fn epsilon_from_z(z: f64, delta: f64) -> Result<f64> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!("noise multiplier must be positive, got {z}")));
    }
    check_delta(delta)?;
    Ok((2.0 * (1.25 / delta).ln()).sqrt() / z)
}
