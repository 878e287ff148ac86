use chrono::Days;
use serde::{Deserialize, Serialize};

use super::weighted_composite;
use crate::data::{DataPanel, Day};
use crate::error::{Error, Result};

pub const FUNDAMENTAL_FEATURES: [&str; 4] = ["roe", "net_income_growth", "revenue_growth", "solvency"];

/// Snapshots older than this are ignored.
const LOOKBACK_DAYS: u64 = 5 * 365 + 1;
const MIN_SNAPSHOTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FundamentalParams {
    /// Weights over [`FUNDAMENTAL_FEATURES`], on the simplex.
    pub weights: Vec<f64>,
}

impl Default for FundamentalParams {
    fn default() -> Self {
        FundamentalParams { weights: vec![0.25; 4] }
    }
}

impl FundamentalParams {
    pub fn validate(&self) -> Result<()> {
        check_simplex("fundamental.weights", &self.weights, FUNDAMENTAL_FEATURES.len())
    }
}

pub(crate) fn check_simplex(name: &str, w: &[f64], dim: usize) -> Result<()> {
    if w.len() != dim {
        return Err(Error::config(format!("{name} needs {dim} entries, got {}", w.len())));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("{name} must be non-negative and sum to 1")));
    }
    Ok(())
}

fn growth(now: f64, then: f64) -> Option<f64> {
    (then != 0.0).then(|| (now - then) / then.abs())
}

/// Raw features of one asset at decision day `t`, or `None` when fewer than
/// four snapshots from the last five years are visible.
pub fn fundamental_features(panel: &DataPanel, asset: usize, t: Day) -> Option<[f64; 4]> {
    let info = t.checked_sub(1)?;
    let visible = panel.visible_fundamentals(asset, info);
    let horizon = panel.date(info).checked_sub_days(Days::new(LOOKBACK_DAYS))?;
    let recent: Vec<_> = visible.iter().filter(|s| s.as_of >= horizon).collect();
    if recent.len() < MIN_SNAPSHOTS {
        return None;
    }
    let last = recent[recent.len() - 1];
    let base = recent[recent.len() - MIN_SNAPSHOTS];
    if last.total_assets <= 0.0 {
        return None;
    }
    Some([
        last.roe,
        growth(last.net_income, base.net_income)?,
        growth(last.revenue, base.revenue)?,
        1.0 - last.total_liabilities / last.total_assets,
    ])
}

/// Weighted sum of cross-sectional feature z-scores over `pool`, aligned with `pool`.
pub fn score_fundamental(
    panel: &DataPanel,
    pool: &[usize],
    t: Day,
    params: &FundamentalParams,
) -> Result<Vec<Option<f64>>> {
    let raw: Vec<Option<[f64; 4]>> = pool.iter().map(|&i| fundamental_features(panel, i, t)).collect();
    if raw.iter().flatten().count() < 2 {
        return Err(Error::Scoring(format!(
            "fundamental z-scores need at least two scorable assets on {}",
            panel.date(t)
        )));
    }
    let features: Vec<Vec<Option<f64>>> = (0..4)
        .map(|k| raw.iter().map(|r| r.map(|f| f[k])).collect())
        .collect();
    Ok(weighted_composite(&features, &params.weights))
}
