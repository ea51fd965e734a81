//! Round-wise clipping bound `C_i^t = F(ε_i) · λ(t)`.
//!
//! `λ` holds at 1 for the first `T_s = ⌊r_s T⌋` rounds and then follows a
//! half cosine from 1 towards `λ_min`:
//!
//! `λ(t) = λ_min + (1 − λ_min) · (1 + cos(π (t − T_s) / (T − T_s))) / 2`
//!
//! The last round `T − 1` stops one step short of `λ_min`; the formula is
//! used as written, without renormalising the endpoint.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fitting::FitResult;
use crate::mechanism::ClipBound;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    pub total_rounds: usize,
    pub r_s: f64,
    pub lambda_min: f64,
}

impl ScheduleParams {
    pub const DEFAULT_R_S: f64 = 0.6;
    pub const DEFAULT_LAMBDA_MIN: f64 = 0.1;

    pub fn new(total_rounds: usize, r_s: f64, lambda_min: f64) -> Result<Self> {
        let p = ScheduleParams {
            total_rounds,
            r_s,
            lambda_min,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_defaults(total_rounds: usize) -> Result<Self> {
        Self::new(total_rounds, Self::DEFAULT_R_S, Self::DEFAULT_LAMBDA_MIN)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_rounds == 0 {
            return Err(Error::Config("schedule needs at least one round".into()));
        }
        if !(0.0..1.0).contains(&self.r_s) {
            return Err(Error::Config(format!("r_s must lie in [0,1), got {}", self.r_s)));
        }
        if !(self.lambda_min > 0.0 && self.lambda_min <= 1.0) {
            return Err(Error::Config(format!(
                "lambda_min must lie in (0,1], got {}",
                self.lambda_min
            )));
        }
        if self.decay_start() >= self.total_rounds {
            return Err(Error::Config(format!(
                "decay start {} must be below total rounds {}",
                self.decay_start(),
                self.total_rounds
            )));
        }
        Ok(())
    }

    /// `T_s = ⌊r_s T⌋`.
    pub fn decay_start(&self) -> usize {
        // the slack absorbs products like 0.29 * 100 = 28.999999999999996
        (self.r_s * self.total_rounds as f64 + 1e-9).floor() as usize
    }
}

pub fn lambda(t: usize, params: &ScheduleParams) -> Result<f64> {
    params.validate()?;
    let total = params.total_rounds;
    if t >= total {
        return Err(Error::Domain(format!("round {t} outside 0..{total}")));
    }
    let start = params.decay_start();
    if t < start {
        return Ok(1.0);
    }
    let progress = (t - start) as f64 / (total - start) as f64;
    let lmin = params.lambda_min;
    Ok(lmin + (1.0 - lmin) * (1.0 + (PI * progress).cos()) / 2.0)
}

/// `λ(t)` for every round.
pub fn lambda_table(params: &ScheduleParams) -> Result<Vec<f64>> {
    (0..params.total_rounds).map(|t| lambda(t, params)).collect()
}

/// The clip bound of a client with budget `eps` in round `t`. Depends only
/// on the budget, the round and the fitted mapping.
pub fn clip_bound(eps: f64, t: usize, fit: &FitResult, params: &ScheduleParams) -> Result<ClipBound> {
    let base = fit.evaluate(eps);
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::Config(format!(
            "fitted threshold at epsilon {eps} is {base}; clamp_floor must be positive"
        )));
    }
    ClipBound::new(base * lambda(t, params)?).map_err(|e| Error::Config(format!("clip bound at round {t}: {e}")))
}
