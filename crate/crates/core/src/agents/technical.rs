use serde::{Deserialize, Serialize};

use super::fundamental::check_simplex;
use super::weighted_composite;
use crate::data::{DataPanel, Day};
use crate::error::{Error, Result};
use crate::indicators::{adx, atr, bollinger, ema, hurst, rsi};

pub const TECHNICAL_FEATURES: [&str; 6] = ["ema_trend", "rsi_reversion", "atr_calm", "bollinger_reversion", "adx", "hurst"];

/// Days of price history a technical score needs.
pub const TECHNICAL_HISTORY: usize = 126;

/// EMA windows for which the trend feature is precomputed.
pub const EMA_WINDOWS: [usize; 2] = [21, 63];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechnicalParams {
    /// Weights over [`TECHNICAL_FEATURES`], on the simplex.
    pub weights: Vec<f64>,
    pub ema_window: usize,
}

impl Default for TechnicalParams {
    fn default() -> Self {
        TechnicalParams {
            weights: vec![1.0 / 6.0; 6],
            ema_window: 63,
        }
    }
}

impl TechnicalParams {
    pub fn validate(&self) -> Result<()> {
        check_simplex("technical.weights", &self.weights, TECHNICAL_FEATURES.len())?;
        if !EMA_WINDOWS.contains(&self.ema_window) {
            return Err(Error::config(format!(
                "technical.ema_window must be one of {EMA_WINDOWS:?}, got {}",
                self.ema_window
            )));
        }
        Ok(())
    }
}

/// Raw technical features per asset and day: the trend feature for each of
/// [`EMA_WINDOWS`] followed by the five remaining features.
pub struct TechnicalFeatures {
    rows: Vec<Vec<[f64; 7]>>,
}

impl TechnicalFeatures {
    pub fn new(panel: &DataPanel) -> TechnicalFeatures {
        let rows = (0..panel.n_assets())
            .map(|i| {
                let close = panel.closes(i);
                let high = panel.highs(i);
                let low = panel.lows(i);
                let e21 = ema(&close, EMA_WINDOWS[0]).expect("window >= 1");
                let e63 = ema(&close, EMA_WINDOWS[1]).expect("window >= 1");
                let r = rsi(&close, 14).expect("window >= 1");
                let a = atr(&high, &low, &close, 14).expect("aligned series");
                let bb = bollinger(&close, 20, 2.0).expect("window >= 1");
                let dx = adx(&high, &low, &close, 14).expect("aligned series");
                let h = hurst(&close, TECHNICAL_HISTORY).expect("window long enough");
                (0..close.len())
                    .map(|s| {
                        let c = close[s];
                        [
                            c / e21.raw()[s] - 1.0,
                            c / e63.raw()[s] - 1.0,
                            (50.0 - r.raw()[s]) / 50.0,
                            -a.raw()[s] / c,
                            0.5 - bb.percent_b.raw()[s],
                            dx.raw()[s] / 100.0,
                            h.raw()[s] - 0.5,
                        ]
                    })
                    .collect()
            })
            .collect();
        TechnicalFeatures { rows }
    }

    /// The six features of `asset` known at the close of `info_day`, or `None` in warm-up.
    pub fn features(&self, asset: usize, info_day: Day, ema_window: usize) -> Option<[f64; 6]> {
        if info_day + 1 < TECHNICAL_HISTORY {
            return None;
        }
        let row = self.rows[asset][info_day];
        let trend = if ema_window == EMA_WINDOWS[0] { row[0] } else { row[1] };
        let f = [trend, row[2], row[3], row[4], row[5], row[6]];
        f.iter().all(|v| v.is_finite()).then_some(f)
    }

    /// Composite score over `pool` for decision day `t`, aligned with `pool`.
    pub fn score(&self, pool: &[usize], t: Day, params: &TechnicalParams) -> Result<Vec<Option<f64>>> {
        let Some(info) = t.checked_sub(1) else {
            return Ok(vec![None; pool.len()]);
        };
        let raw: Vec<Option<[f64; 6]>> = pool.iter().map(|&i| self.features(i, info, params.ema_window)).collect();
        if raw.iter().all(Option::is_none) {
            return Ok(vec![None; pool.len()]);
        }
        if pool.len() < 2 {
            return Err(Error::Scoring("technical z-scores need at least two assets".into()));
        }
        let features: Vec<Vec<Option<f64>>> = (0..6)
            .map(|k| raw.iter().map(|r| r.map(|f| f[k])).collect())
            .collect();
        Ok(weighted_composite(&features, &params.weights))
    }
}

/// Technical scores for one day, computing indicators from scratch.
pub fn score_technical(panel: &DataPanel, pool: &[usize], t: Day, params: &TechnicalParams) -> Result<Vec<Option<f64>>> {
    TechnicalFeatures::new(panel).score(pool, t, params)
}
