//! Volatility targeting.
//!
//! Exposure is scaled by `min(sigma_target / sigma_hat, cap)` where
//! `sigma_hat` is an exponentially weighted estimate over the last `window`
//! daily returns. The remainder sits in cash at a zero rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskParams {
    /// Annualized volatility target.
    pub sigma_target: f64,
    pub lambda: f64,
    pub window: usize,
    pub cap: f64,
}

impl Default for RiskParams {
    fn default() -> Self {
        RiskParams {
            sigma_target: 0.15,
            lambda: 0.94,
            window: 60,
            cap: 1.0,
        }
    }
}

impl RiskParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::config(format!("risk.lambda must lie in (0, 1), got {}", self.lambda)));
        }
        if !(self.sigma_target > 0.0 && self.sigma_target.is_finite()) {
            return Err(Error::config(format!("risk.sigma_target must be positive, got {}", self.sigma_target)));
        }
        if !(self.cap > 0.0 && self.cap <= 1.0) {
            return Err(Error::config(format!("risk.cap must lie in (0, 1], got {}", self.cap)));
        }
        if self.window == 0 {
            return Err(Error::config("risk.window must be at least 1"));
        }
        Ok(())
    }
}

/// Daily EWMA variance `(1 - lambda) * sum_j lambda^(j-1) * r_{t-j}^2` over the
/// last `n` entries of `returns` (oldest first). Missing history counts as zero.
pub fn ewma_variance(returns: &[f64], lambda: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Horizon { what: "EWMA window", needed: 1, available: 0 });
    }
    let mut total = 0.0;
    let mut weight = 1.0 - lambda;
    for r in returns.iter().rev().take(n) {
        total += weight * r * r;
        weight *= lambda;
    }
    Ok(total)
}

/// Annualized EWMA volatility.
pub fn ewma_vol(returns: &[f64], lambda: f64, n: usize) -> Result<f64> {
    Ok((ewma_variance(returns, lambda, n)? * TRADING_DAYS).sqrt())
}

/// Exposure multiplier; a zero estimate gets the cap.
pub fn scale_factor(sigma_target: f64, sigma_hat: f64, cap: f64) -> f64 {
    if sigma_hat <= 0.0 {
        log::debug!("zero volatility estimate, exposure at cap {cap}");
        return cap;
    }
    (sigma_target / sigma_hat).min(cap)
}

/// Scaled weights and the cash remainder.
pub fn apply_scaling(weights: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let scaled: Vec<f64> = weights.iter().map(|w| w * beta).collect();
    let cash = 1.0 - scaled.iter().sum::<f64>();
    (scaled, cash)
}

/// Tracks the unscaled return stream of one strategy and sizes the next day.
#[derive(Clone, Debug)]
pub struct RiskController {
    params: RiskParams,
    history: Vec<f64>,
}

impl RiskController {
    pub fn new(params: RiskParams) -> Result<Self> {
        params.validate()?;
        Ok(RiskController { params, history: Vec::new() })
    }

    /// Multiplier for the next decision, from returns recorded so far.
    pub fn beta(&self) -> f64 {
        let sigma = ewma_vol(&self.history, self.params.lambda, self.params.window).expect("window validated");
        scale_factor(self.params.sigma_target, sigma, self.params.cap)
    }

    /// Records the unscaled portfolio return of the day just closed.
    pub fn record(&mut self, unscaled_return: f64) {
        self.history.push(unscaled_return);
    }
}
