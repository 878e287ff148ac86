use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::TRADING_DAYS;

/// The eight performance figures. Ratios whose denominator is zero are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "CR")]
    pub cr: f64,
    #[serde(rename = "AR")]
    pub ar: f64,
    #[serde(rename = "STD")]
    pub std: f64,
    #[serde(rename = "DD")]
    pub dd: f64,
    #[serde(rename = "Sharpe")]
    pub sharpe: Option<f64>,
    #[serde(rename = "Sortino")]
    pub sortino: Option<f64>,
    #[serde(rename = "MDD")]
    pub mdd: f64,
    #[serde(rename = "Calmar")]
    pub calmar: Option<f64>,
}

impl MetricsReport {
    pub const NAMES: [&'static str; 8] = ["CR", "AR", "STD", "DD", "Sharpe", "Sortino", "MDD", "Calmar"];

    pub fn values(&self) -> [Option<f64>; 8] {
        [
            Some(self.cr),
            Some(self.ar),
            Some(self.std),
            Some(self.dd),
            self.sharpe,
            self.sortino,
            Some(self.mdd),
            self.calmar,
        ]
    }
}

/// Sample standard deviation; zero for fewer than two values or when the
/// spread is rounding noise relative to the mean.
pub(crate) fn sample_std(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if sd <= 1e-12 * mean.abs() {
        0.0
    } else {
        sd
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

/// Metrics of a NAV path (`nav[0]` is the starting value) at a zero risk-free rate.
pub fn metrics_from_nav(nav: &[f64]) -> Result<MetricsReport> {
    if nav.len() < 2 {
        return Err(Error::Horizon { what: "metrics NAV path", needed: 2, available: nav.len() as i64 });
    }
    if nav.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonFinite("NAV path must be positive and finite".into()));
    }
    let returns: Vec<f64> = nav.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let days = returns.len() as f64;
    let cr = nav[nav.len() - 1] / nav[0] - 1.0;
    let ar = (1.0 + cr).powf(TRADING_DAYS / days) - 1.0;
    let std = sample_std(&returns) * TRADING_DAYS.sqrt();
    let negative: Vec<f64> = returns.iter().copied().filter(|r| *r < 0.0).collect();
    let dd = sample_std(&negative) * TRADING_DAYS.sqrt();
    let mut peak = nav[0];
    let mut mdd: f64 = 0.0;
    for &v in nav {
        peak = peak.max(v);
        mdd = mdd.min(v / peak - 1.0);
    }
    Ok(MetricsReport {
        cr,
        ar,
        std,
        dd,
        sharpe: ratio(ar, std),
        sortino: ratio(ar, dd),
        mdd,
        calmar: ratio(ar, mdd.abs()),
    })
}

/// Metrics of daily returns compounded from a NAV of one.
pub fn compute_metrics(returns: &[f64]) -> Result<MetricsReport> {
    let mut nav = Vec::with_capacity(returns.len() + 1);
    nav.push(1.0);
    for r in returns {
        nav.push(nav[nav.len() - 1] * (1.0 + r));
    }
    metrics_from_nav(&nav)
}
