use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DataPanel;
use crate::error::Result;
use crate::indicators::{kdj, macd, rsi, sma};

/// Single-asset timing rules used as comparison strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Sma,
    Rsi,
    Sign,
    Kdj,
    Macd,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Sma,
        BaselineKind::Rsi,
        BaselineKind::Sign,
        BaselineKind::Kdj,
        BaselineKind::Macd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Sma => "sma",
            BaselineKind::Rsi => "rsi",
            BaselineKind::Sign => "sign",
            BaselineKind::Kdj => "kdj",
            BaselineKind::Macd => "macd",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown baseline `{s}`"))
    }
}

/// Position (0 or 1) held after each close, from that close and earlier
/// ones. The position for decision day `t` is entry `t - 1`.
pub fn baseline_signal(kind: BaselineKind, high: &[f64], low: &[f64], close: &[f64]) -> Result<Vec<u8>> {
    let n = close.len();
    let mut pos = vec![0u8; n];
    match kind {
        BaselineKind::Sma => {
            let fast = sma(close, 5)?;
            let slow = sma(close, 10)?;
            for s in 0..n {
                if let (Some(a), Some(b)) = (fast.get(s), slow.get(s)) {
                    pos[s] = u8::from(a > b);
                }
            }
        }
        BaselineKind::Rsi => {
            let r = rsi(close, 10)?;
            let mut held = 0;
            for s in 0..n {
                if let Some(v) = r.get(s) {
                    if v < 30.0 {
                        held = 1;
                    } else if v > 70.0 {
                        held = 0;
                    }
                }
                pos[s] = held;
            }
        }
        BaselineKind::Sign => {
            for s in 20..n {
                pos[s] = u8::from(close[s] / close[s - 20] - 1.0 > 0.0);
            }
        }
        BaselineKind::Kdj => {
            let k = kdj(high, low, close, 9)?;
            let mut held = 0;
            for s in 1..n {
                if let (Some(k0), Some(d0), Some(k1), Some(d1), Some(j1)) =
                    (k.k.get(s - 1), k.d.get(s - 1), k.k.get(s), k.d.get(s), k.j.get(s))
                {
                    if k0 <= d0 && k1 > d1 && j1 > k1 {
                        held = 1;
                    } else if k0 >= d0 && k1 < d1 {
                        held = 0;
                    }
                }
                pos[s] = held;
            }
        }
        BaselineKind::Macd => {
            let m = macd(close, 12, 26, 9)?;
            for s in 0..n {
                if let (Some(a), Some(b)) = (m.macd.get(s), m.signal.get(s)) {
                    pos[s] = u8::from(a > b);
                }
            }
        }
    }
    Ok(pos)
}

/// Baseline positions for every asset of a panel, on adjusted prices.
pub fn panel_signals(kind: BaselineKind, panel: &DataPanel) -> Result<Vec<Vec<u8>>> {
    (0..panel.n_assets())
        .map(|i| {
            let bars = panel.bars(i);
            let factor: Vec<f64> = bars.iter().map(|b| if b.close > 0.0 { b.adj_close / b.close } else { 1.0 }).collect();
            let high: Vec<f64> = bars.iter().zip(&factor).map(|(b, f)| b.high * f).collect();
            let low: Vec<f64> = bars.iter().zip(&factor).map(|(b, f)| b.low * f).collect();
            let close: Vec<f64> = bars.iter().map(|b| b.adj_close).collect();
            baseline_signal(kind, &high, &low, &close)
        })
        .collect()
}
