use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, nearest};
use crate::agents::simplex_grid;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceParams {
    pub clusters: usize,
    /// Days of agent returns summarized by each clustering feature.
    pub feature_window: usize,
    pub min_history: usize,
    /// Most recent days considered.
    pub lookback: usize,
    pub grid_step: f64,
}

impl Default for ReferenceParams {
    fn default() -> Self {
        ReferenceParams {
            clusters: 3,
            feature_window: 20,
            min_history: 40,
            lookback: 252,
            grid_step: 0.1,
        }
    }
}

impl ReferenceParams {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.feature_window == 0 {
            return Err(Error::config("allocator.reference needs clusters >= 1 and feature_window >= 1"));
        }
        if self.min_history <= self.feature_window {
            return Err(Error::config("allocator.reference.min_history must exceed feature_window"));
        }
        if self.lookback < self.min_history {
            return Err(Error::config("allocator.reference.lookback must be at least min_history"));
        }
        simplex_grid(2, self.grid_step).map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub weights: Vec<f64>,
    /// True when the uniform fallback was used.
    pub fallback: bool,
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Sample Sharpe ratio without annualization. Zero dispersion maps to the
/// sign of the mean as an infinity (or zero for a zero mean).
pub(crate) fn plain_sharpe(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if sd <= 1e-12 * mean.abs() || sd == 0.0 {
        return if mean > 0.0 {
            f64::INFINITY
        } else if mean < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
    }
    mean / sd
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12)
}

/// Grid point maximizing the Sharpe ratio of the combined return over
/// `days` (rows of per-agent returns). Ties on Sharpe prefer the higher mean;
/// if every grid point ties the result is uniform, otherwise the tied point
/// closest to uniform (then the earliest) wins.
pub fn best_sharpe_weights(days: &[&[f64]], n_agents: usize, step: f64) -> Result<Vec<f64>> {
    let grid = simplex_grid(n_agents, step)?;
    let stats: Vec<(f64, f64)> = grid
        .iter()
        .map(|w| {
            let combined: Vec<f64> = days.iter().map(|r| r.iter().zip(w).map(|(a, b)| a * b).sum()).collect();
            let mean = combined.iter().sum::<f64>() / combined.len().max(1) as f64;
            (plain_sharpe(&combined), mean)
        })
        .collect();
    let best_sharpe = stats.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..grid.len()).filter(|&g| close(stats[g].0, best_sharpe)).collect();
    let best_mean = tied.iter().map(|&g| stats[g].1).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = tied.into_iter().filter(|&g| close(stats[g].1, best_mean)).collect();
    if tied.len() == grid.len() {
        return Ok(uniform(n_agents));
    }
    let u = 1.0 / n_agents as f64;
    let dist = |g: usize| grid[g].iter().map(|w| (w - u) * (w - u)).sum::<f64>();
    let mut pick = tied[0];
    for &g in &tied[1..] {
        if dist(g) < dist(pick) - 1e-15 {
            pick = g;
        }
    }
    Ok(grid[pick].clone())
}

/// Reference agent weights from per-day agent returns (oldest first).
///
/// Each candidate day `d` is described by the per-agent mean and standard
/// deviation of the `feature_window` returns before it. Candidate days are
/// clustered, the latest feature vector is assigned to a cluster, and the
/// Sharpe-maximizing grid weights are searched over the day-`d` returns of
/// that cluster's members.
pub fn reference_weights(history: &[Vec<f64>], n_agents: usize, params: &ReferenceParams) -> Result<Reference> {
    let fallback = Reference { weights: uniform(n_agents), fallback: true };
    if history.len() < params.min_history {
        return Ok(fallback);
    }
    let recent = &history[history.len().saturating_sub(params.lookback)..];
    let degenerate = (0..n_agents).all(|a| {
        let first = recent[0][a];
        recent.iter().all(|r| r[a] == first)
    });
    if degenerate {
        log::debug!("agent return history has no variance; uniform reference weights");
        return Ok(fallback);
    }

    let fw = params.feature_window;
    let feature = |end: usize| -> Vec<f64> {
        let window = &recent[end - fw..end];
        let mut f = Vec::with_capacity(2 * n_agents);
        for a in 0..n_agents {
            let mean = window.iter().map(|r| r[a]).sum::<f64>() / fw as f64;
            let var = window.iter().map(|r| (r[a] - mean).powi(2)).sum::<f64>() / fw as f64;
            f.push(mean);
            f.push(var.sqrt());
        }
        f
    };
    let candidates: Vec<usize> = (fw..recent.len()).collect();
    let features: Vec<Vec<f64>> = candidates.iter().map(|&d| feature(d)).collect();
    let clusters = kmeans(&features, params.clusters, 100);
    let current = nearest(&clusters.centroids, &feature(recent.len()));
    let mut members: Vec<&[f64]> = candidates
        .iter()
        .zip(&clusters.labels)
        .filter(|(_, l)| **l == current)
        .map(|(&d, _)| recent[d].as_slice())
        .collect();
    if members.len() < 2 {
        members = candidates.iter().map(|&d| recent[d].as_slice()).collect();
    }
    Ok(Reference {
        weights: best_sharpe_weights(&members, n_agents, params.grid_step)?,
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_positive_agent_gets_full_mass() {
        let history: Vec<Vec<f64>> = (0..60).map(|t| vec![0.01 + 0.001 * ((t % 5) as f64), 0.0, 0.0, 0.0]).collect();
        let r = reference_weights(&history, 4, &ReferenceParams::default()).unwrap();
        assert!(!r.fallback);
        assert_eq!(r.weights, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn identical_agents_give_uniform() {
        let history: Vec<Vec<f64>> = (0..60).map(|t| vec![((t * 13) % 7) as f64 * 0.001 - 0.003; 4]).collect();
        let r = reference_weights(&history, 4, &ReferenceParams::default()).unwrap();
        assert_eq!(r.weights, vec![0.25; 4]);
    }

    #[test]
    fn short_or_flat_history_falls_back() {
        let p = ReferenceParams::default();
        assert!(reference_weights(&vec![vec![0.01, 0.02]; 10], 2, &p).unwrap().fallback);
        let r = reference_weights(&vec![vec![0.0, 0.0]; 100], 2, &p).unwrap();
        assert!(r.fallback);
        assert_eq!(r.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn sharpe_two_beats_sharpe_zero() {
        // Stream a: mean 0.02, sd 0.01 (Sharpe 2); stream b: mean 0, sd 0.01.
        let a = [0.03, 0.01, 0.03, 0.01, 0.03, 0.01, 0.03, 0.01];
        let b = [0.01, 0.01, -0.01, -0.01, 0.01, 0.01, -0.01, -0.01];
        let rows: Vec<Vec<f64>> = a.iter().zip(&b).map(|(x, y)| vec![*x, *y]).collect();
        let days: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let got = best_sharpe_weights(&days, 2, 0.1).unwrap();

        let mut best = (f64::NEG_INFINITY, vec![]);
        for g in 0..=10 {
            let w = g as f64 / 10.0;
            let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| w * x + (1.0 - w) * y).collect();
            let m = c.iter().sum::<f64>() / 8.0;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 7.0).sqrt();
            if m / sd > best.0 + 1e-12 {
                best = (m / sd, vec![w, 1.0 - w]);
            }
        }
        assert_eq!(best.1, vec![1.0, 0.0]);
        assert_eq!(got, best.1);
    }
}
