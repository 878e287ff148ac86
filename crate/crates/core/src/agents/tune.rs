use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fundamental::fundamental_features;
use super::{
    composite_from_z, standalone_portfolio, zscore, AgentId, FundamentalParams, NewsParams, ReportParams,
    ScorerParams, ScoringContext, TechnicalParams,
};
use crate::data::Day;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub fundamental_step: f64,
    pub technical_step: f64,
    pub ema_windows: Vec<usize>,
    pub news_windows: Vec<usize>,
    pub report_windows: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            fundamental_step: 0.5,
            technical_step: 0.5,
            ema_windows: vec![21, 63],
            news_windows: vec![5, 10, 21],
            report_windows: vec![21, 42, 63],
        }
    }
}

impl GridConfig {
    /// Candidate parameter sets for `agent`; the other agents keep `base`.
    pub fn points(&self, agent: AgentId, base: &ScorerParams) -> Result<Vec<ScorerParams>> {
        let with = |f: &dyn Fn(&mut ScorerParams)| {
            let mut p = base.clone();
            f(&mut p);
            p
        };
        let points: Vec<ScorerParams> = match agent {
            AgentId::Fundamental => simplex_grid(4, self.fundamental_step)?
                .into_iter()
                .map(|w| with(&|p| p.fundamental = FundamentalParams { weights: w.clone() }))
                .collect(),
            AgentId::Technical => {
                let simplex = simplex_grid(6, self.technical_step)?;
                self.ema_windows
                    .iter()
                    .flat_map(|&ema_window| {
                        simplex.iter().map(move |w| (ema_window, w.clone()))
                    })
                    .map(|(ema_window, w)| with(&|p| p.technical = TechnicalParams { weights: w.clone(), ema_window }))
                    .collect()
            }
            AgentId::News => self
                .news_windows
                .iter()
                .map(|&window| with(&|p| p.news = NewsParams { window }))
                .collect(),
            AgentId::Report => self
                .report_windows
                .iter()
                .map(|&window| with(&|p| p.report = ReportParams { window }))
                .collect(),
        };
        if points.is_empty() {
            return Err(Error::config(format!("empty search grid for the {agent} agent")));
        }
        for p in &points {
            p.validate()?;
        }
        Ok(points)
    }
}

/// All weight vectors of dimension `dim` whose entries are multiples of
/// `step` and sum to one, in lexicographically descending order.
pub fn simplex_grid(dim: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    let units = (1.0 / step).round();
    if dim == 0 || !(step > 0.0 && step <= 1.0) || ((units * step) - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("simplex step {step} must divide 1")));
    }
    let units = units as usize;
    let mut out = Vec::new();
    let mut current = vec![0usize; dim];
    fn recurse(k: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k + 1 == current.len() {
            current[k] = left;
            out.push(current.clone());
            return;
        }
        for v in (0..=left).rev() {
            current[k] = v;
            recurse(k + 1, left - v, current, out);
        }
    }
    let mut ints = Vec::new();
    recurse(0, units, &mut current, &mut ints);
    for v in ints {
        out.push(v.into_iter().map(|u| u as f64 / units as f64).collect());
    }
    Ok(out)
}

/// Annualized Sharpe ratio of daily returns (sample std); `-inf` without dispersion.
pub(crate) fn annualized_sharpe(returns: &[f64]) -> f64 {
    let n = returns.len();
    if n < 2 {
        return f64::NEG_INFINITY;
    }
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    // Rounding leaves a residue on constant series.
    if sd <= 1e-12 * mean.abs() || sd == 0.0 {
        return f64::NEG_INFINITY;
    }
    mean / sd * 252f64.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub agent: AgentId,
    pub params: ScorerParams,
    pub sharpe: f64,
    /// Sharpe of every grid point, in grid order.
    pub grid_sharpes: Vec<f64>,
}

/// Exhaustive search for the parameters maximizing the agent's standalone
/// top-decile Sharpe over decision days `days`, with the whole universe as pool.
/// Ties keep the earlier grid point.
pub fn tune_agent_params(
    ctx: &ScoringContext<'_>,
    agent: AgentId,
    days: Range<Day>,
    grid: &[ScorerParams],
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::config(format!("empty search grid for the {agent} agent")));
    }
    let panel = ctx.panel();
    let days = days.start.max(1)..days.end.min(panel.n_days());
    let pool: Vec<usize> = (0..panel.n_assets()).collect();
    let daily_return = |t: Day, scores: &[Option<f64>]| -> f64 {
        standalone_portfolio(scores)
            .iter()
            .enumerate()
            .map(|(i, w)| w * panel.asset_return(i, t))
            .sum()
    };

    let sharpes: Vec<f64> = match agent {
        AgentId::Fundamental | AgentId::Technical => {
            // Feature z-scores do not depend on the weights: compute them once per day.
            let windows: Vec<usize> = if agent == AgentId::Technical {
                let mut w: Vec<usize> = grid.iter().map(|p| p.technical.ema_window).collect();
                w.sort_unstable();
                w.dedup();
                w
            } else {
                vec![0]
            };
            let cache: Vec<Vec<Vec<Vec<Option<f64>>>>> = windows
                .par_iter()
                .map(|&window| {
                    days.clone()
                        .map(|t| {
                            let raw: Vec<Option<Vec<f64>>> = pool
                                .iter()
                                .map(|&i| match agent {
                                    AgentId::Fundamental => fundamental_features(panel, i, t).map(|f| f.to_vec()),
                                    _ => ctx.technical().features(i, t - 1, window).map(|f| f.to_vec()),
                                })
                                .collect();
                            let dim = if agent == AgentId::Fundamental { 4 } else { 6 };
                            if raw.iter().flatten().count() < 2 {
                                return vec![vec![None; pool.len()]; dim];
                            }
                            (0..dim)
                                .map(|k| zscore(&raw.iter().map(|r| r.as_ref().map(|f| f[k])).collect::<Vec<_>>()))
                                .collect()
                        })
                        .collect()
                })
                .collect();
            grid.par_iter()
                .map(|p| {
                    let (weights, slot) = if agent == AgentId::Fundamental {
                        (&p.fundamental.weights, 0)
                    } else {
                        let slot = windows.iter().position(|w| *w == p.technical.ema_window).expect("cached");
                        (&p.technical.weights, slot)
                    };
                    let rets: Vec<f64> = days
                        .clone()
                        .zip(&cache[slot])
                        .map(|(t, z)| daily_return(t, &composite_from_z(z, weights)))
                        .collect();
                    annualized_sharpe(&rets)
                })
                .collect()
        }
        AgentId::News | AgentId::Report => grid
            .par_iter()
            .map(|p| {
                let rets: Vec<f64> = days
                    .clone()
                    .map(|t| daily_return(t, &ctx.score_or_mask(agent, &pool, t, p)))
                    .collect();
                annualized_sharpe(&rets)
            })
            .collect(),
    };

    let mut best = 0;
    for (k, s) in sharpes.iter().enumerate() {
        if *s > sharpes[best] {
            best = k;
        }
    }
    Ok(TuneResult {
        agent,
        params: grid[best].clone(),
        sharpe: sharpes[best],
        grid_sharpes: sharpes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_grid_sizes_and_order() {
        let g = simplex_grid(4, 0.5).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(g[1], vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(simplex_grid(6, 0.5).unwrap().len(), 21);
        assert_eq!(simplex_grid(4, 0.1).unwrap().len(), 286);
        assert!(g.iter().all(|w| (w.iter().sum::<f64>() - 1.0).abs() < 1e-12));
        assert!(simplex_grid(3, 0.3).is_err());
    }

    #[test]
    fn sharpe_degenerate_is_neg_inf() {
        assert_eq!(annualized_sharpe(&[0.01; 10]), f64::NEG_INFINITY);
        assert_eq!(annualized_sharpe(&[0.01]), f64::NEG_INFINITY);
        let s = annualized_sharpe(&[0.01, 0.03]);
        assert!((s - 0.02 / 0.0002f64.sqrt() * 252f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn grid_points_validate() {
        let g = GridConfig::default();
        let base = ScorerParams::default();
        assert_eq!(g.points(AgentId::Technical, &base).unwrap().len(), 42);
        assert_eq!(g.points(AgentId::News, &base).unwrap().len(), 3);
        let empty = GridConfig { news_windows: vec![], ..GridConfig::default() };
        assert!(matches!(empty.points(AgentId::News, &base), Err(Error::Config(_))));
    }
}
