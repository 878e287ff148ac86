//! Portfolio assembly, daily replay, metrics and the ablation grid.
//!
//! A decision for day `t` sees information up to the close of `t - 1` and
//! earns the close-to-close return of day `t`.

mod ablation;
mod baselines;
mod engine;
mod ledger;
mod metrics;

use std::collections::BTreeMap;

use crate::data::Asset;
use crate::macro_agent::IndustryWeights;

pub use ablation::{ablation_run, write_ablation_csv, AblationRow, ABLATION_ROWS};
pub use baselines::{baseline_signal, panel_signals, BaselineKind};
pub use engine::{AblationFlags, BacktestConfig, Backtester, RunOutput, Strategy};
pub use ledger::{excess_series, Ledger, LedgerRow};
pub use metrics::{compute_metrics, metrics_from_nav, MetricsReport};

/// Sparse non-negative weights keyed by index, sorted by index. The
/// remainder up to one is cash.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightVector {
    ids: Vec<usize>,
    weights: Vec<f64>,
}

impl WeightVector {
    /// Keeps the strictly positive entries of a dense vector.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (ids, weights) = dense.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(i, w)| (i, *w)).unzip();
        WeightVector { ids, weights }
    }

    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.retain(|(_, w)| *w > 0.0);
        pairs.sort_by_key(|(i, _)| *i);
        let (ids, weights) = pairs.into_iter().unzip();
        WeightVector { ids, weights }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.ids.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn cash(&self) -> f64 {
        1.0 - self.total()
    }

    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, w) in self.iter() {
            out[i] = w;
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        WeightVector { ids: self.ids.clone(), weights: self.weights.iter().map(|w| w * factor).collect() }
    }
}

/// Per-asset composite `sum_a w_a * z_a` over the agents that score the
/// asset with positive weight. `z[a][i]` is agent `a`'s z-score of pool entry `i`.
/// An asset no weighted agent scores is `None`.
pub fn aggregate_scores(z: &[Vec<Option<f64>>], agent_weights: &[f64]) -> Vec<Option<f64>> {
    let n = z.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let mut total = None;
            for (za, &w) in z.iter().zip(agent_weights) {
                if w > 0.0 {
                    if let Some(v) = za[i] {
                        total = Some(total.unwrap_or(0.0) + w * v);
                    }
                }
            }
            total
        })
        .collect()
}

/// Long-only portfolio over `pool` (panel indices, aligned with `composites`).
///
/// Each industry of the pool is a sleeve holding its top tenth of scored
/// names (at least one, ties to the lower index) at equal weight. Sleeves are
/// sized by the industry weight and the whole is renormalized. No scored
/// names, or zero total industry weight, gives an empty (all-cash) vector.
pub fn construct_portfolio(
    composites: &[Option<f64>],
    pool: &[usize],
    assets: &[Asset],
    industry_weights: &IndustryWeights,
) -> WeightVector {
    let mut sleeves: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for (&i, c) in pool.iter().zip(composites) {
        if let Some(v) = c {
            sleeves.entry(assets[i].industry.as_str()).or_default().push((i, *v));
        }
    }
    let mut picks = Vec::new();
    let mut total = 0.0;
    for (code, mut names) in sleeves {
        let sleeve = industry_weights.get(code).unwrap_or(0.0);
        if sleeve <= 0.0 {
            continue;
        }
        names.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let k = names.len().div_ceil(10).max(1);
        for &(i, _) in &names[..k] {
            picks.push((i, sleeve / k as f64));
        }
        total += sleeve;
    }
    if total <= 0.0 {
        return WeightVector::default();
    }
    WeightVector::from_pairs(picks.into_iter().map(|(i, w)| (i, w / total)).collect())
}
