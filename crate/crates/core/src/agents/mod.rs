//! Firm-level scoring agents.
//!
//! Every score for decision day `t` is built from information available at
//! the close of day `t - 1`.

mod fundamental;
mod technical;
mod text;
mod tune;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{DataPanel, Day};
use crate::error::{Error, Result};

pub use fundamental::{fundamental_features, score_fundamental, FundamentalParams, FUNDAMENTAL_FEATURES};
pub use technical::{score_technical, TechnicalFeatures, TechnicalParams, TECHNICAL_FEATURES};
pub use text::{
    report_composite, score_news, score_report, DeterministicStub, NewsParams, PrecomputedTable,
    RemoteClient, ReportParams, TextIndex, TextRequest, TextResponse, TextScoreProvider,
};
pub use tune::{simplex_grid, tune_agent_params, GridConfig, TuneResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentId {
    Fundamental,
    Technical,
    News,
    Report,
}

impl AgentId {
    pub const ALL: [AgentId; 4] = [AgentId::Fundamental, AgentId::Technical, AgentId::News, AgentId::Report];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentId::Fundamental => "fundamental",
            AgentId::Technical => "technical",
            AgentId::News => "news",
            AgentId::Report => "report",
        }
    }

    /// Agents scoring structured (numeric) inputs rather than text.
    pub fn is_structured(self) -> bool {
        matches!(self, AgentId::Fundamental | AgentId::Technical)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        AgentId::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown agent `{s}`"))
    }
}

/// Tuned parameters for all four agents.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerParams {
    pub fundamental: FundamentalParams,
    pub technical: TechnicalParams,
    pub news: NewsParams,
    pub report: ReportParams,
}

impl ScorerParams {
    pub fn validate(&self) -> Result<()> {
        self.fundamental.validate()?;
        self.technical.validate()?;
        self.news.validate()?;
        self.report.validate()
    }
}

/// Cross-sectional z-scores over the available entries, population std.
/// A cross-section without dispersion maps to all zeros.
pub fn zscore(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return values.to_vec();
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let sd = (present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    values
        .iter()
        .map(|v| v.map(|x| if sd > 0.0 { (x - mean) / sd } else { 0.0 }))
        .collect()
}

/// Feature-weighted sum of per-feature z-scores; masked if any feature is.
pub(crate) fn weighted_composite(features: &[Vec<Option<f64>>], weights: &[f64]) -> Vec<Option<f64>> {
    let zs: Vec<Vec<Option<f64>>> = features.iter().map(|f| zscore(f)).collect();
    composite_from_z(&zs, weights)
}

pub(crate) fn composite_from_z(zs: &[Vec<Option<f64>>], weights: &[f64]) -> Vec<Option<f64>> {
    let n = zs.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let mut total = 0.0;
            for (z, w) in zs.iter().zip(weights) {
                total += w * z[i]?;
            }
            Some(total)
        })
        .collect()
}

/// Equal weights over the top `ceil(n/10)` scored entries (at least one),
/// ties broken by position. All-masked input gives all-zero weights.
pub fn standalone_portfolio(scores: &[Option<f64>]) -> Vec<f64> {
    let mut ranked: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|v| (i, v)))
        .collect();
    let mut weights = vec![0.0; scores.len()];
    if ranked.is_empty() {
        return weights;
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let k = ranked.len().div_ceil(10).max(1);
    for &(i, _) in &ranked[..k] {
        weights[i] = 1.0 / k as f64;
    }
    weights
}

/// Precomputed per-asset inputs shared by all scoring calls on one panel.
pub struct ScoringContext<'a> {
    panel: &'a DataPanel,
    technical: TechnicalFeatures,
    text: TextIndex,
    provider: Arc<dyn TextScoreProvider>,
}

impl<'a> ScoringContext<'a> {
    pub fn new(panel: &'a DataPanel, provider: Arc<dyn TextScoreProvider>) -> Self {
        ScoringContext {
            panel,
            technical: TechnicalFeatures::new(panel),
            text: TextIndex::new(panel),
            provider,
        }
    }

    pub fn panel(&self) -> &'a DataPanel {
        self.panel
    }

    pub fn technical(&self) -> &TechnicalFeatures {
        &self.technical
    }

    /// Scores of one agent over `pool` for decision day `t`, aligned with `pool`.
    pub fn score(&self, agent: AgentId, pool: &[usize], t: Day, params: &ScorerParams) -> Result<Vec<Option<f64>>> {
        if t == 0 {
            return Err(Error::Horizon { what: "agent score", needed: -1, available: 0 });
        }
        match agent {
            AgentId::Fundamental => score_fundamental(self.panel, pool, t, &params.fundamental),
            AgentId::Technical => self.technical.score(pool, t, &params.technical),
            AgentId::News => Ok(self.text.score_news(self.provider.as_ref(), self.panel, pool, t, &params.news)),
            AgentId::Report => {
                Ok(self.text.score_report(self.provider.as_ref(), self.panel, pool, t, &params.report))
            }
        }
    }

    /// Like [`ScoringContext::score`], but a scoring error masks the whole cross-section.
    pub fn score_or_mask(&self, agent: AgentId, pool: &[usize], t: Day, params: &ScorerParams) -> Vec<Option<f64>> {
        match self.score(agent, pool, t, params) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("{agent} scores masked on {}: {e}", self.panel.date(t));
                vec![None; pool.len()]
            }
        }
    }
}
