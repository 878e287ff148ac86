use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::baselines::{panel_signals, BaselineKind};
use super::ledger::Ledger;
use super::{aggregate_scores, construct_portfolio, WeightVector};
use crate::agents::{standalone_portfolio, zscore, AgentId, ScorerParams, ScoringContext, TextScoreProvider};
use crate::allocator::{Allocator, Checkpoint, HyperParams, TelemetryRow};
use crate::data::{DataPanel, Day};
use crate::error::{Error, Result};
use crate::macro_agent::{MacroParams, MacroSchedule, MacroSeries};
use crate::risk::{RiskController, RiskParams};

/// Which components of the hierarchical strategy are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub risk_scaling: bool,
    /// Learned agent weights; off means constant equal agent weights.
    pub combined_optimization: bool,
    pub text_agents: bool,
    pub structured_agents: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags::FULL
    }
}

impl AblationFlags {
    pub const FULL: AblationFlags =
        AblationFlags { risk_scaling: true, combined_optimization: true, text_agents: true, structured_agents: true };
    pub const NONE: AblationFlags =
        AblationFlags { risk_scaling: false, combined_optimization: false, text_agents: false, structured_agents: false };

    /// Either at least one score source is on, or everything is off.
    pub fn validate(&self) -> Result<()> {
        if !self.text_agents && !self.structured_agents && *self != AblationFlags::NONE {
            return Err(Error::config(
                "ablation flags disable every scoring agent; turn all flags off for the equal-weight control",
            ));
        }
        Ok(())
    }

    pub fn agents(&self) -> Vec<AgentId> {
        AgentId::ALL
            .into_iter()
            .filter(|a| if a.is_structured() { self.structured_agents } else { self.text_agents })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Hierarchical,
    /// One agent's top-decile portfolio over the whole universe.
    Standalone(AgentId),
    Baseline(BaselineKind),
    /// Daily-rebalanced 1/N over the universe; also the benchmark.
    EqualWeight,
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Hierarchical => "hierarchical".into(),
            Strategy::Standalone(a) => format!("standalone_{a}"),
            Strategy::Baseline(k) => k.to_string(),
            Strategy::EqualWeight => "equal_weight".into(),
        }
    }

    /// Every strategy reported by a backtest run.
    pub fn all() -> Vec<Strategy> {
        let mut out = vec![Strategy::Hierarchical];
        out.extend(AgentId::ALL.map(Strategy::Standalone));
        out.extend(BaselineKind::ALL.map(Strategy::Baseline));
        out.push(Strategy::EqualWeight);
        out
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Strategy::all()
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BacktestConfig {
    pub macro_params: MacroParams,
    pub scorer: ScorerParams,
    pub allocator: HyperParams,
    pub risk: RiskParams,
    pub flags: AblationFlags,
    /// Cost per unit of turnover in basis points.
    pub cost_bps: f64,
    pub seed: u64,
    /// First day the hierarchical strategy trades (unrecorded until `record_start`).
    pub warmup_start: Day,
    /// First ledger day.
    pub record_start: Day,
    /// One past the last ledger day; clamped to the panel.
    pub end: Day,
}

impl BacktestConfig {
    pub fn new(warmup_start: Day, record_start: Day, end: Day) -> Self {
        BacktestConfig {
            macro_params: MacroParams::default(),
            scorer: ScorerParams::default(),
            allocator: HyperParams::default(),
            risk: RiskParams::default(),
            flags: AblationFlags::FULL,
            cost_bps: 0.0,
            seed: 0,
            warmup_start,
            record_start,
            end,
        }
    }
}

/// Everything a strategy run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub ledger: Ledger,
    /// Active agents, in allocator order. Empty for non-hierarchical strategies.
    pub agents: Vec<AgentId>,
    /// Agent weights for each ledger row.
    pub agent_weights: Vec<Vec<f64>>,
    pub telemetry: Vec<TelemetryRow>,
    pub checkpoint: Option<Checkpoint>,
}

impl RunOutput {
    fn plain(ledger: Ledger) -> Self {
        RunOutput { ledger, agents: Vec::new(), agent_weights: Vec::new(), telemetry: Vec::new(), checkpoint: None }
    }
}

/// Holdings carried between days: turnover, costs and NAV accounting.
struct Book<'p> {
    panel: &'p DataPanel,
    ledger: Ledger,
    drifted: Vec<f64>,
    cost_bps: f64,
}

impl<'p> Book<'p> {
    fn new(panel: &'p DataPanel, name: String, cost_bps: f64) -> Self {
        Book { panel, ledger: Ledger::new(name), drifted: vec![0.0; panel.n_assets()], cost_bps }
    }

    /// Holds `held` over day `t`; returns the gross return.
    fn step(&mut self, t: Day, held: WeightVector, beta: f64, record: bool) -> f64 {
        let dense = held.dense(self.panel.n_assets());
        let turnover = 0.5 * dense.iter().zip(&self.drifted).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let gross: f64 = held.iter().map(|(i, w)| w * self.panel.asset_return(i, t)).sum();
        let growth = 1.0 + gross;
        for (i, d) in self.drifted.iter_mut().enumerate() {
            *d = if growth > 0.0 { dense[i] * (1.0 + self.panel.asset_return(i, t)) / growth } else { 0.0 };
        }
        if record {
            let net = gross - turnover * self.cost_bps / 1e4;
            let cash = held.cash();
            self.ledger.push(self.panel.date(t), net, turnover, beta, cash, held);
        }
        gross
    }
}

/// A panel with its scoring caches and industry schedule, shared by strategy runs.
pub struct Backtester<'a> {
    panel: &'a DataPanel,
    ctx: ScoringContext<'a>,
    schedule: MacroSchedule,
    config: BacktestConfig,
}

impl<'a> Backtester<'a> {
    pub fn new(
        panel: &'a DataPanel,
        series: &MacroSeries,
        provider: Arc<dyn TextScoreProvider>,
        mut config: BacktestConfig,
    ) -> Result<Self> {
        config.flags.validate()?;
        config.risk.validate()?;
        config.scorer.validate()?;
        if !(config.cost_bps >= 0.0 && config.cost_bps.is_finite()) {
            return Err(Error::config(format!("cost_bps must be non-negative, got {}", config.cost_bps)));
        }
        config.end = config.end.min(panel.n_days());
        config.warmup_start = config.warmup_start.max(1);
        if config.record_start < config.warmup_start || config.record_start >= config.end {
            return Err(Error::Horizon {
                what: "backtest window",
                needed: config.record_start as i64,
                available: config.warmup_start as i64,
            });
        }
        let schedule = MacroSchedule::build(panel, series, &config.macro_params)?;
        Ok(Backtester { panel, ctx: ScoringContext::new(panel, provider), schedule, config })
    }

    pub fn panel(&self) -> &'a DataPanel {
        self.panel
    }

    pub fn config(&self) -> &BacktestConfig {
        &self.config
    }

    pub fn schedule(&self) -> &MacroSchedule {
        &self.schedule
    }

    pub fn run(&self, strategy: Strategy) -> Result<RunOutput> {
        match strategy {
            Strategy::Hierarchical => self.run_hierarchical(self.config.flags, strategy.name()),
            Strategy::Standalone(agent) => self.run_standalone(agent),
            Strategy::Baseline(kind) => self.run_baseline(kind),
            Strategy::EqualWeight => Ok(self.run_equal_weight(strategy.name())),
        }
    }

    /// The hierarchical strategy under `flags`; all flags off is the equal-weight control.
    pub fn run_flags(&self, flags: AblationFlags, name: impl Into<String>) -> Result<RunOutput> {
        flags.validate()?;
        if flags == AblationFlags::NONE {
            return Ok(self.run_equal_weight(name.into()));
        }
        self.run_hierarchical(flags, name.into())
    }

    fn book(&self, name: String) -> Book<'a> {
        Book::new(self.panel, name, self.config.cost_bps)
    }

    fn portfolio_return(&self, p: &WeightVector, t: Day) -> f64 {
        p.iter().map(|(i, w)| w * self.panel.asset_return(i, t)).sum()
    }

    fn run_equal_weight(&self, name: String) -> RunOutput {
        let n = self.panel.n_assets();
        let mut book = self.book(name);
        let held = WeightVector::from_dense(&vec![1.0 / n as f64; n]);
        for t in self.config.record_start..self.config.end {
            book.step(t, held.clone(), 1.0, true);
        }
        RunOutput::plain(book.ledger)
    }

    fn run_standalone(&self, agent: AgentId) -> Result<RunOutput> {
        let universe: Vec<usize> = (0..self.panel.n_assets()).collect();
        let mut book = self.book(Strategy::Standalone(agent).name());
        for t in self.config.record_start..self.config.end {
            let scores = self.ctx.score_or_mask(agent, &universe, t, &self.config.scorer);
            book.step(t, WeightVector::from_dense(&standalone_portfolio(&scores)), 1.0, true);
        }
        Ok(RunOutput::plain(book.ledger))
    }

    fn run_baseline(&self, kind: BaselineKind) -> Result<RunOutput> {
        let signals = panel_signals(kind, self.panel)?;
        let mut book = self.book(Strategy::Baseline(kind).name());
        for t in self.config.record_start..self.config.end {
            let longs: Vec<usize> = (0..self.panel.n_assets()).filter(|&i| signals[i][t - 1] == 1).collect();
            let w = 1.0 / longs.len().max(1) as f64;
            book.step(t, WeightVector::from_pairs(longs.into_iter().map(|i| (i, w)).collect()), 1.0, true);
        }
        Ok(RunOutput::plain(book.ledger))
    }

    fn run_hierarchical(&self, flags: AblationFlags, name: String) -> Result<RunOutput> {
        let agents = flags.agents();
        let n = agents.len();
        let uniform = vec![1.0 / n as f64; n];
        let mut allocator = if flags.combined_optimization {
            Some(Allocator::new(n, self.config.allocator.clone(), self.config.seed)?)
        } else {
            None
        };
        let mut risk = RiskController::new(self.config.risk.clone())?;
        let mut book = self.book(name);
        let mut agent_weights = Vec::new();
        let mut telemetry = Vec::new();
        let assets = self.panel.assets();

        for t in self.config.warmup_start..self.config.end {
            let decision = self.schedule.decision(t);
            let pool = &decision.pool;
            let z: Vec<Vec<Option<f64>>> = agents
                .iter()
                .map(|a| zscore(&self.ctx.score_or_mask(*a, pool, t, &self.config.scorer)))
                .collect();
            let weights = match allocator.as_mut() {
                Some(al) => al.decide()?.weights,
                None => uniform.clone(),
            };
            let portfolio = |w: &[f64]| construct_portfolio(&aggregate_scores(&z, w), pool, assets, &decision.w_blended);
            let target = portfolio(&weights);
            if target.is_empty() {
                log::debug!("{}: no scored names in the pool, all cash", self.panel.date(t));
            }
            let beta = if flags.risk_scaling { risk.beta() } else { 1.0 };
            let record = t >= self.config.record_start;
            book.step(t, target.scaled(beta), beta, record);
            risk.record(self.portfolio_return(&target, t));
            if let Some(al) = allocator.as_mut() {
                let outcome = al.observe(&|w: &[f64]| self.portfolio_return(&portfolio(w), t))?;
                telemetry.extend(outcome.telemetry);
            }
            if record {
                agent_weights.push(weights);
            }
        }
        Ok(RunOutput {
            ledger: book.ledger,
            agents,
            agent_weights,
            telemetry,
            checkpoint: allocator.map(|al| al.checkpoint()),
        })
    }
}
